"""INI-style experiment configuration.

Precedence, lowest to highest: built-in defaults, the config file, the
``FAIRFGL_OUTPUT_ROOT`` environment variable (output directory only),
command-line flags.  Unknown sections or keys are rejected.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field

from .client import FairnessLossConfig
from .datasets import SbmConfig
from .exceptions import ConfigError
from .federation import STRATEGIES, RunConfig
from .server import ServerConfig

OUTPUT_ENV = "FAIRFGL_OUTPUT_ROOT"


def _ints(s):
    return tuple(int(t) for t in str(s).replace(" ", "").split(",") if t)


def _floats(s):
    return tuple(float(t) for t in str(s).replace(" ", "").split(",") if t)


def _strs(s):
    return tuple(t for t in str(s).replace(" ", "").split(",") if t)


def _bool(s):
    v = str(s).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _eta(s):
    return None if str(s).strip().lower() == "auto" else float(s)


# section -> key -> (parser, default, help)
SCHEMA = {
    "data": {
        "source": (str, "sbm", "'sbm' or 'path'"),
        "path": (str, "", "canonical graph file (source=path, or output of gen)"),
        "block_sizes": (_ints, (300, 120, 60, 60, 60), "SBM nodes per class"),
        "p_in": (float, 0.15, "SBM intra-class edge probability"),
        "p_out": (float, 0.03, "SBM inter-class edge probability"),
        "feature_dim": (int, 32, "SBM feature dimension"),
        "feature_center_scale": (float, 1.0, "SBM class-center scale"),
        "split": (_floats, (0.2, 0.4, 0.4), "train,val,test fractions per class"),
        "seed": (int, 0, "SBM seed"),
    },
    "partition": {
        "method": (str, "fennel", "'fennel' or 'label_skew'"),
        "n_parts": (int, 4, "number of clients (1 = single client, no partitioning)"),
        "balance_gamma": (float, 1.5, "Fennel balance exponent"),
        "alpha": (float, 0.5, "Dirichlet concentration for label_skew"),
        "seed": (int, 0, "label_skew seed"),
        "path": (str, "", "assignment file (written by partition, read by train)"),
    },
    "run": {
        "strategies": (_strs, ("fairfgl", "fedavg"), "comma-separated strategies"),
        "seeds": (_ints, (0,), "comma-separated run seeds"),
        "rounds": (int, 150, "communication rounds T"),
        "local_epochs": (int, 3, "local epochs E per round"),
        "hidden": (int, 64, "GCN hidden width"),
        "lr": (float, 0.05, "gradient-descent step size"),
        "kernel_r": (float, 0.5, "propagation kernel coefficient r"),
        "fedprox_mu": (float, 0.01, "FedProx proximal weight"),
    },
    "fairness": {
        "lambda_distill": (float, 1.0, "history distillation weight"),
        "lambda_struct": (float, 1.0, "majority alignment weight"),
        "margin": (float, 0.1, "gradient modification margin"),
        "topk_ratio": (float, 0.4, "fraction of weights uploaded"),
        "tau_h": (float, 0.5, "training-time homophily threshold"),
        "fine_tune_epochs": (int, 1, "masked fine-tune epochs after top-k selection"),
        "history_window": (int, 5, "global models averaged into the history model"),
        "use_fusion": (_bool, True, "fuse history and local weights"),
        "use_deviated": (_bool, True, "use deviated packages for gradient modification"),
    },
    "server": {
        "eta": (_eta, None, "cross-cluster rate, 'auto' = 1/K"),
        "k_max": (int, 8, "largest k tried by clustering"),
        "kmeans_restarts": (int, 5, "k-means restarts per k"),
        "seed": (int, 0, "clustering seed"),
    },
    "output": {
        "dir": (str, "runs", "output root"),
    },
}


def defaults():
    return {sec: {k: spec[1] for k, spec in keys.items()} for sec, keys in SCHEMA.items()}


@dataclass
class ExperimentConfig:
    values: dict = field(default_factory=defaults)

    def __getitem__(self, section):
        return self.values[section]

    @property
    def out_dir(self):
        return self.values["output"]["dir"]

    def graph_path(self):
        p = self["data"]["path"]
        return p if p else os.path.join(self.out_dir, "graph.txt")

    def assignment_path(self):
        p = self["partition"]["path"]
        return p if p else os.path.join(self.out_dir, "assignment.txt")

    def sbm_config(self):
        d = self["data"]
        return SbmConfig(
            block_sizes=d["block_sizes"], p_in=d["p_in"], p_out=d["p_out"],
            feature_dim=d["feature_dim"], feature_center_scale=d["feature_center_scale"],
            seed=d["seed"], split=d["split"],
        )

    def fairness_config(self):
        f = self["fairness"]
        return FairnessLossConfig(
            lambda_distill=f["lambda_distill"], lambda_struct=f["lambda_struct"], margin=f["margin"],
            topk_ratio=f["topk_ratio"], homophily_threshold=f["tau_h"],
            local_epochs=self["run"]["local_epochs"], fine_tune_epochs=f["fine_tune_epochs"],
            history_window=f["history_window"], use_fusion=f["use_fusion"],
        )

    def server_config(self):
        s = self["server"]
        return ServerConfig(eta=s["eta"], k_max=s["k_max"], kmeans_restarts=s["kmeans_restarts"], seed=s["seed"])

    def run_config(self, strategy, seed):
        r = self["run"]
        return RunConfig(
            strategy=strategy, rounds=r["rounds"], hidden=r["hidden"], lr=r["lr"],
            kernel_r=r["kernel_r"], fedprox_mu=r["fedprox_mu"],
            use_deviated=self["fairness"]["use_deviated"], seed=seed,
            fairness=self.fairness_config(), server=self.server_config(),
        )

    def validate(self):
        """Build every derived config once so errors surface before any work."""
        d, p, r = self["data"], self["partition"], self["run"]
        if d["source"] not in ("sbm", "path"):
            raise ConfigError("data.source must be 'sbm' or 'path'")
        if d["source"] == "sbm":
            self.sbm_config()
        elif not d["path"]:
            raise ConfigError("data.source=path requires data.path")
        if p["method"] not in ("fennel", "label_skew"):
            raise ConfigError("partition.method must be 'fennel' or 'label_skew'")
        if p["n_parts"] < 1:
            raise ConfigError("partition.n_parts must be >= 1")
        if p["alpha"] <= 0:
            raise ConfigError("partition.alpha must be > 0")
        if not r["strategies"] or not r["seeds"]:
            raise ConfigError("run.strategies and run.seeds must be nonempty")
        for s in r["strategies"]:
            if s not in STRATEGIES:
                raise ConfigError(f"unknown strategy {s!r}")
        if min(r["seeds"]) < 0:
            raise ConfigError("seeds must be nonnegative")
        self.run_config(r["strategies"][0], r["seeds"][0])
        return self


def _parse_value(section, key, raw):
    parser = SCHEMA[section][key][0]
    try:
        return parser(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{section}] {key}: {exc}") from None


def load_config(path=None, overrides=None, env=None):
    """Merge defaults, ``path``, env and ``overrides`` (``{(section, key): raw}``)."""
    cfg = ExperimentConfig()
    if path:
        cp = configparser.ConfigParser(interpolation=None)
        try:
            with open(path, encoding="utf-8") as fh:
                cp.read_file(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except configparser.Error as exc:
            raise ConfigError(f"malformed config {path}: {exc}") from None
        for section in cp.sections():
            if section not in SCHEMA:
                raise ConfigError(f"unknown config section [{section}]")
            for key, raw in cp.items(section):
                if key not in SCHEMA[section]:
                    raise ConfigError(f"unknown key {key!r} in [{section}]")
                cfg.values[section][key] = _parse_value(section, key, raw)
    env = os.environ if env is None else env
    if env.get(OUTPUT_ENV):
        cfg.values["output"]["dir"] = env[OUTPUT_ENV]
    for (section, key), raw in (overrides or {}).items():
        if raw is not None:
            cfg.values[section][key] = _parse_value(section, key, raw)
    return cfg
