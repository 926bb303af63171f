import json
import logging
import os
from typing import Dict, List, Tuple

from errors import ConfigError

logger = logging.getLogger(__name__)


class AssetManager:
    """Locates and caches the JSON run configurations under assets/config"""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super(AssetManager, cls).__new__(cls)
            cls._instance.initialize()
        return cls._instance

    def initialize(self):
        """Initialize caches and base paths"""
        self.configs: Dict[str, dict] = {}
        self.texts: Dict[str, str] = {}

        # Repository root is two levels above src/systems
        self.base_path = os.path.dirname(
            os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
        )
        self.asset_path = os.path.join(self.base_path, "assets")
        self.config_path = os.path.join(self.asset_path, "config")

    def resolve(self, name_or_path: str) -> str:
        """Map a shipped config name or a filesystem path to a file path"""
        if os.path.isfile(name_or_path):
            return os.path.abspath(name_or_path)
        candidate = os.path.join(self.config_path, f"{name_or_path}.json")
        if os.path.isfile(candidate):
            return candidate
        raise ConfigError(f"Config file not found: {name_or_path}")

    def get_config_text(self, name_or_path: str) -> Tuple[str, str]:
        """Return (path, raw text) of a config file"""
        path = self.resolve(name_or_path)
        if path not in self.texts:
            with open(path, "r") as f:
                self.texts[path] = f.read()
            logger.info("Loaded config: %s", path)
        return path, self.texts[path]

    def get_config(self, name_or_path: str) -> dict:
        """Get or load a config file"""
        path, text = self.get_config_text(name_or_path)
        if path not in self.configs:
            try:
                self.configs[path] = json.loads(text)
            except json.JSONDecodeError as e:
                raise ConfigError(f"Config {path} is not valid JSON: {e}") from e
        return self.configs[path]

    def list_configs(self) -> List[str]:
        """Names of the shipped configurations"""
        if not os.path.isdir(self.config_path):
            return []
        return sorted(
            os.path.splitext(f)[0]
            for f in os.listdir(self.config_path)
            if f.endswith(".json")
        )

    def clear_cache(self):
        """Clear all cached configs"""
        self.configs.clear()
        self.texts.clear()
