"""Unit tests for hmpc-toolkit."""
