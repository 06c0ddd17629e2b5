"""Generative specification for synthetic moderation logs.

Configs live in INI-style key-value files (sections [population],
[thresholds], [compliance], [score_mixture], [effects]); every value can
be overridden by a same-named long CLI flag.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, replace

from .errors import InvalidConfig

# Half-width of the cutoff selection window for quasi-experiment units.
COHORT_WINDOW = 0.05

# Injected adjustment comments carry scores at least this far beyond the
# selection windows so they can never be picked as a focal comment and
# never distort density or compliance near a cutoff.
DELTA_MARGIN = 0.06


@dataclass(frozen=True)
class Compliance:
    """Intervention probability below (f0) and at/above (f1) a threshold."""

    f0: float
    f1: float


@dataclass(frozen=True)
class BetaMixture:
    """Mixture of Beta distributions for classifier scores."""

    weights: tuple
    alphas: tuple
    betas: tuple

    def __post_init__(self):
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        object.__setattr__(self, "alphas", tuple(float(a) for a in self.alphas))
        object.__setattr__(self, "betas", tuple(float(b) for b in self.betas))

    @property
    def n_components(self) -> int:
        return len(self.weights)

    def component_means(self):
        return tuple(a / (a + b) for a, b in zip(self.alphas, self.betas))


@dataclass(frozen=True)
class SimConfig:
    """Full generative specification; generate() is a pure function of it."""

    n_users: int
    n_posts: int
    t_hide: float
    t_delete: float
    hide_compliance: Compliance
    delete_compliance: Compliance
    score_dist: BetaMixture
    tau_delete_comments: float = 0.0
    tau_delete_interventions: float = 0.0
    tau_hide_comments: float = 0.0
    tau_hide_interventions: float = 0.0
    tau_sd: float = 0.0
    base_activity: float = 0.5
    contagion: float = 0.0
    followup_days: int = 28
    suspension_hours: int = 24
    seed: int = 0

    @property
    def duration_days(self) -> int:
        # Room for a pre-assignment window, a follow-up window, and slack.
        return 2 * self.followup_days + 7

    @property
    def duration_seconds(self) -> int:
        return self.duration_days * 86400

    @property
    def suspension_seconds(self) -> int:
        return self.suspension_hours * 3600

    def any_effect(self) -> bool:
        return any(
            t != 0.0
            for t in (
                self.tau_delete_comments,
                self.tau_delete_interventions,
                self.tau_hide_comments,
                self.tau_hide_interventions,
            )
        ) or self.tau_sd > 0.0

    def low_delta_region(self):
        return (0.005, self.t_hide - DELTA_MARGIN)

    def high_delta_region(self):
        return (self.t_delete + DELTA_MARGIN, 0.995)

    def validate(self) -> None:
        if self.n_users <= 0 or self.n_posts <= 0:
            raise InvalidConfig("n_users and n_posts must be positive")
        if not (0.0 < self.t_hide < self.t_delete < 1.0):
            raise InvalidConfig("need 0 < t_hide < t_delete < 1")
        for name, comp in (("hide", self.hide_compliance), ("delete", self.delete_compliance)):
            if not (0.0 <= comp.f0 <= comp.f1 <= 1.0):
                raise InvalidConfig(f"{name} compliance needs 0 <= f0 <= f1 <= 1")
        mix = self.score_dist
        if not (len(mix.weights) == len(mix.alphas) == len(mix.betas)) or not mix.weights:
            raise InvalidConfig("score mixture components are misaligned")
        if any(w < 0 for w in mix.weights) or abs(sum(mix.weights) - 1.0) > 1e-12:
            raise InvalidConfig("mixture weights must be non-negative and sum to 1")
        if any(a <= 0 for a in mix.alphas) or any(b <= 0 for b in mix.betas):
            raise InvalidConfig("Beta parameters must be positive")
        if self.base_activity < 0 or self.contagion < 0:
            raise InvalidConfig("rates must be non-negative")
        if self.followup_days <= 0 or self.suspension_hours <= 0:
            raise InvalidConfig("durations must be positive")
        if self.tau_sd < 0:
            raise InvalidConfig("tau_sd must be non-negative")
        if not (0 <= self.seed < 2**64):
            raise InvalidConfig("seed must fit in 64 bits")
        if self.any_effect():
            lo = self.low_delta_region()
            hi = self.high_delta_region()
            if lo[1] - lo[0] < 0.01 or hi[1] - hi[0] < 0.01:
                raise InvalidConfig(
                    "thresholds leave no room for adjustment-comment score bands; "
                    "move t_hide up or t_delete down, or zero the effects"
                )

    def with_seed(self, seed: int) -> "SimConfig":
        return replace(self, seed=int(seed))


def _floats(raw: str):
    return tuple(float(tok) for tok in raw.replace(",", " ").split())


def read_config(path, overrides: dict | None = None) -> SimConfig:
    """Load a SimConfig from an INI file, applying flat key overrides."""
    parser = configparser.ConfigParser()
    with open(path, "r", encoding="utf-8") as fh:
        parser.read_file(fh)
    flat = {}
    for section in parser.sections():
        for key, value in parser.items(section):
            flat[key] = value
    if overrides:
        flat.update({k: v for k, v in overrides.items() if v is not None})
    return config_from_mapping(flat)


def config_from_mapping(flat: dict) -> SimConfig:
    try:
        cfg = SimConfig(
            n_users=int(flat["n_users"]),
            n_posts=int(flat["n_posts"]),
            t_hide=float(flat["t_hide"]),
            t_delete=float(flat["t_delete"]),
            hide_compliance=Compliance(
                f0=float(flat["hide_f0"]), f1=float(flat["hide_f1"])
            ),
            delete_compliance=Compliance(
                f0=float(flat["delete_f0"]), f1=float(flat["delete_f1"])
            ),
            score_dist=BetaMixture(
                weights=_floats(str(flat["weights"])),
                alphas=_floats(str(flat["alphas"])),
                betas=_floats(str(flat["betas"])),
            ),
            tau_delete_comments=float(flat.get("tau_delete_comments", 0.0)),
            tau_delete_interventions=float(flat.get("tau_delete_interventions", 0.0)),
            tau_hide_comments=float(flat.get("tau_hide_comments", 0.0)),
            tau_hide_interventions=float(flat.get("tau_hide_interventions", 0.0)),
            tau_sd=float(flat.get("tau_sd", 0.0)),
            base_activity=float(flat.get("base_activity", 0.5)),
            contagion=float(flat.get("contagion", 0.0)),
            followup_days=int(flat.get("followup_days", 28)),
            suspension_hours=int(flat.get("suspension_hours", 24)),
            seed=int(flat.get("seed", 0)),
        )
    except (KeyError, ValueError) as exc:
        raise InvalidConfig(f"bad or missing config value: {exc}") from exc
    cfg.validate()
    return cfg


def write_config(cfg: SimConfig, path) -> None:
    parser = configparser.ConfigParser()
    parser["population"] = {
        "n_users": str(cfg.n_users),
        "n_posts": str(cfg.n_posts),
        "base_activity": repr(cfg.base_activity),
        "contagion": repr(cfg.contagion),
        "followup_days": str(cfg.followup_days),
        "suspension_hours": str(cfg.suspension_hours),
        "seed": str(cfg.seed),
    }
    parser["thresholds"] = {"t_hide": repr(cfg.t_hide), "t_delete": repr(cfg.t_delete)}
    parser["compliance"] = {
        "hide_f0": repr(cfg.hide_compliance.f0),
        "hide_f1": repr(cfg.hide_compliance.f1),
        "delete_f0": repr(cfg.delete_compliance.f0),
        "delete_f1": repr(cfg.delete_compliance.f1),
    }
    parser["score_mixture"] = {
        "weights": ", ".join(repr(w) for w in cfg.score_dist.weights),
        "alphas": ", ".join(repr(a) for a in cfg.score_dist.alphas),
        "betas": ", ".join(repr(b) for b in cfg.score_dist.betas),
    }
    parser["effects"] = {
        "tau_delete_comments": repr(cfg.tau_delete_comments),
        "tau_delete_interventions": repr(cfg.tau_delete_interventions),
        "tau_hide_comments": repr(cfg.tau_hide_comments),
        "tau_hide_interventions": repr(cfg.tau_hide_interventions),
        "tau_sd": repr(cfg.tau_sd),
    }
    with open(path, "w", encoding="utf-8") as fh:
        parser.write(fh)
