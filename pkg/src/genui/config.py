"""Service configuration: YAML file plus environment overrides."""

from __future__ import annotations

import os
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Optional

import yaml


@dataclass
class AppConfig:
    store_path: str = "./genui-data"
    backend_kind: str = "mock"  # mock | scripted | external
    backend_params: dict[str, Any] = field(default_factory=dict)
    search_provider: str = "mock"
    deadline_s: float = 180.0
    history_cap: int = 20
    max_tool_rounds: int = 8
    client_error_cap: int = 200
    thumbnail_max_edge: int = 512
    asset_cache_ttl_s: float = 7 * 24 * 3600.0
    prompt_dir: Optional[str] = None  # defaults to the bundled resources
    transcript_dir: Optional[str] = None
    chain_disabled: list[str] = field(default_factory=list)
    api_key_env: dict[str, str] = field(default_factory=dict)
    studio_dist: Optional[str] = None

    @classmethod
    def load(cls, path: Optional[Path | str] = None) -> "AppConfig":
        data: dict[str, Any] = {}
        if path is not None:
            with open(path, encoding="utf-8") as fh:
                data = yaml.safe_load(fh) or {}
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**data)
        cfg._apply_env()
        return cfg

    def _apply_env(self) -> None:
        env = os.environ
        if "GENUI_BACKEND_KIND" in env:
            self.backend_kind = env["GENUI_BACKEND_KIND"]
        if "GENUI_STORE_PATH" in env:
            self.store_path = env["GENUI_STORE_PATH"]
        if "GENUI_DEADLINE_S" in env:
            self.deadline_s = float(env["GENUI_DEADLINE_S"])
        if "GENUI_SEARCH_PROVIDER" in env:
            self.search_provider = env["GENUI_SEARCH_PROVIDER"]
