import logging
import os
from typing import Callable, Dict, List, Optional

LOG_FORMAT = "%(asctime)s %(levelname)-7s %(name)s: %(message)s"


class DebugSystem:
    """Run diagnostics: log handlers and watched values"""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super(DebugSystem, cls).__new__(cls)
            cls._instance.initialize()
        return cls._instance

    def initialize(self):
        self.logger = logging.getLogger("afem")
        self.watches: Dict[str, Callable] = {}
        self._handlers: List[logging.Handler] = []

    def configure(self, run_dir: Optional[str] = None, level: int = logging.INFO):
        """Attach console and run.log handlers to the root logger"""
        self.reset_handlers()
        root = logging.getLogger()
        root.setLevel(level)
        formatter = logging.Formatter(LOG_FORMAT)

        stream = logging.StreamHandler()
        stream.setFormatter(formatter)
        self._handlers.append(stream)

        if run_dir is not None:
            os.makedirs(run_dir, exist_ok=True)
            file_handler = logging.FileHandler(os.path.join(run_dir, "run.log"))
            file_handler.setFormatter(formatter)
            self._handlers.append(file_handler)

        for handler in self._handlers:
            root.addHandler(handler)

    def reset_handlers(self):
        root = logging.getLogger()
        for handler in self._handlers:
            root.removeHandler(handler)
            handler.close()
        self._handlers = []

    def add_watch(self, name: str, callback: Callable):
        """Add a value to report at stage boundaries"""
        self.watches[name] = callback

    def remove_watch(self, name: str):
        """Remove a watched value"""
        if name in self.watches:
            del self.watches[name]

    def dump_watches(self) -> Dict[str, object]:
        """Evaluate and log every watch"""
        values = {}
        for name, callback in self.watches.items():
            try:
                values[name] = callback()
                self.logger.info("%s: %s", name, values[name])
            except Exception as e:
                self.logger.warning("Error in watch '%s': %s", name, e)
        return values
