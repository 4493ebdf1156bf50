"""Run settings.

One flat record covers scene synthesis, the staged search, training and
fusion. Values come from built-in defaults, then an optional YAML file,
then explicit overrides (command-line flags), in that order.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace

import yaml

from .search import SearchConfig

__all__ = ["Settings"]


@dataclass(frozen=True)
class Settings:
    # staged search
    n_bins: int = 4
    n_stages: int = 8
    n_levels: int = 4
    n_channels: int = 8
    n_groups: int = 4
    conf_stages: int = 6
    threads: int = 1
    agg_radius: tuple = (2, 2, 2, 2)
    # training
    epochs: int = 10
    learning_rate: float = 0.05
    stage_ramp: int = 0
    # fusion
    tau_ph: float = 0.4
    tau_px: float = 1.0
    tau_rel: float = 0.01
    min_consistent: int = 2
    # dense benchmark
    dense_hypotheses: int = 512
    # scene synthesis
    kind: str = "plane"
    seed: int = 0
    height: int = 128
    width: int = 160
    n_views: int = 3
    baseline: float = 12.0
    focal: float = 800.0
    z_mid: float = 100.0
    n_waves: int = 32
    margin: int = 48
    noise: float = 0.0

    @classmethod
    def load(cls, path=None, **overrides) -> "Settings":
        """Settings from an optional YAML file plus non-None overrides."""
        values = {}
        if path is not None:
            with open(path) as f:
                loaded = yaml.safe_load(f) or {}
            if not isinstance(loaded, dict):
                raise ValueError(f"{path}: expected a mapping of settings")
            values.update(loaded)
        values.update({k: v for k, v in overrides.items() if v is not None})
        known = {f.name for f in fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise ValueError(f"unknown settings: {', '.join(sorted(unknown))}")
        if "agg_radius" in values:
            values["agg_radius"] = tuple(values["agg_radius"])
        return cls(**values)

    def updated(self, **overrides) -> "Settings":
        """Copy with the non-None overrides applied."""
        return replace(self, **{k: v for k, v in overrides.items()
                                if v is not None})

    def search_config(self) -> SearchConfig:
        """SearchConfig for these settings.

        conf_stages caps at n_stages so that shortening the search keeps
        the consistency average defined instead of failing validation.
        """
        return SearchConfig(n_bins=self.n_bins, n_stages=self.n_stages,
                            n_levels=self.n_levels, n_channels=self.n_channels,
                            n_groups=self.n_groups,
                            conf_stages=min(self.conf_stages, self.n_stages),
                            threads=self.threads,
                            agg_radius=tuple(self.agg_radius))

    def save(self, path) -> None:
        data = asdict(self)
        data["agg_radius"] = list(self.agg_radius)
        with open(path, "w") as f:
            yaml.safe_dump(data, f, sort_keys=False)
