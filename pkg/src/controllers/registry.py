"""
Controller Registry - discovery and registration of controllers.

This module provides the central registry for controller classes, handling
registration, alias lookup, and instantiation. Third-party controllers are
discovered through the ``hmpc.controllers`` entry-point group.
"""

import logging
from importlib.metadata import entry_points
from typing import Any, Dict, Optional, Type

from controllers.base import Controller

logger = logging.getLogger(__name__)


class ControllerRegistry:
    """
    Central registry for controller classes.

    Classes are stored un-instantiated; every ``create`` call returns a fresh
    instance with its own solver workspace and warm-start memory.
    """

    def __init__(self):
        self._controllers: Dict[str, Type[Controller]] = {}
        self._controller_info: Dict[str, Dict[str, Any]] = {}
        self._aliases: Dict[str, str] = {}

    def register_controller(self, controller_class: Type[Controller]) -> None:
        """
        Register a controller class.

        Args:
            controller_class: The Controller subclass to register.
        """
        # Temporary instance to read name/version/aliases once
        temp_instance = controller_class()
        name = temp_instance.name
        version = temp_instance.version

        if name in self._controllers:
            logger.warning(f"Overwriting existing controller: {name}")

        self._controllers[name] = controller_class
        self._controller_info[name] = {
            "name": name,
            "version": version,
            "aliases": list(temp_instance.aliases),
        }
        for alias in temp_instance.aliases:
            self._aliases[alias] = name
        logger.debug(f"Registered controller: {name} v{version}")

    def resolve_name(self, name: str) -> str:
        """Map an alias to its canonical controller name."""
        return self._aliases.get(name, name)

    def create(self, name: str, **kwargs) -> Controller:
        """
        Instantiate a registered controller.

        Args:
            name: Controller name or alias.
            **kwargs: Passed to the controller constructor.

        Raises:
            ValueError: If the name is not registered.
        """
        canonical = self.resolve_name(name)
        if canonical not in self._controllers:
            available = ", ".join(sorted(self._controllers)) or "none"
            raise ValueError(
                f"Unknown controller: {name}. Available controllers: {available}"
            )
        return self._controllers[canonical](**kwargs)

    def list_controllers(self) -> list[str]:
        """List all registered controller names."""
        return list(self._controllers.keys())

    def has_controller(self, name: str) -> bool:
        return self.resolve_name(name) in self._controllers

    def get_controller_info(self, name: str) -> Optional[Dict[str, Any]]:
        """Cached metadata for a controller, or None if unknown."""
        return self._controller_info.get(self.resolve_name(name))


# Global registry instance
_registry: Optional[ControllerRegistry] = None


def get_registry() -> ControllerRegistry:
    """Get the global controller registry singleton."""
    global _registry
    if _registry is None:
        _registry = ControllerRegistry()
    return _registry


def reset_registry() -> None:
    """Reset the global registry (mainly for testing)."""
    global _registry
    _registry = None


def register_builtin_controllers() -> None:
    """
    Register the shipped controllers and discover external ones via entry
    points.
    """
    registry = get_registry()

    from controllers.hierarchical import HMPCController
    from controllers.hqp import HQPController
    from controllers.weighted import WeightedMPCController

    for controller_class in (HMPCController, WeightedMPCController, HQPController):
        registry.register_controller(controller_class)

    for ep in entry_points(group="hmpc.controllers"):
        try:
            registry.register_controller(ep.load())
        except Exception as e:
            logger.warning(f"Could not load controller plugin {ep.name}: {e}")


def create_controller(name: str, **kwargs) -> Controller:
    """Create a controller from the global registry, registering builtins first."""
    registry = get_registry()
    if not registry.list_controllers():
        register_builtin_controllers()
    return registry.create(name, **kwargs)
