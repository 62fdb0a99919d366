"""INI-style run configuration.

Sections and keys (anything else is rejected)::

    [run]       seed, output, name
    [model]     n_img, n_txt, proj, hidden, classes, project
    [fusion]    kind, project, d, mode, normalize, t_q, t_v, t_o, rank
    [fusion.X]  same keys as [fusion]; one section per head, X names it
    [task]      n_q, n_v, classes, rank, n_train, n_test, noise_sigma, features, target
    [train]     preset, lr, batch, epochs, beta1, beta2, eps
    [check]     converge, converge_tol, above_floor, floor

Seeds: the task generator uses ``seed``, model initialisation ``seed + 100``
and batch shuffling ``seed + 200``.
"""

import configparser
import os
from dataclasses import dataclass, field, replace
from pathlib import Path

from .errors import ConfigurationError, ParameterError
from .fusion import FusionKind
from .synth import PRESETS, SynthTaskSpec
from .vqahead import ModelSpec

SEED_ENV = "FUSIONBENCH_SEED"
MODEL_SEED_OFFSET = 100
TRAIN_SEED_OFFSET = 200

_RUN_KEYS = {"seed", "output", "name"}
_MODEL_KEYS = {"n_img", "n_txt", "proj", "hidden", "classes", "project"}
_FUSION_KEYS = {
    FusionKind.ELEMENTWISE: {"kind", "project"},
    FusionKind.MCB: {"kind", "project", "d", "mode", "normalize"},
    FusionKind.MUTAN: {"kind", "t_q", "t_v", "t_o", "rank"},
}
_TASK_KEYS = {"n_q", "n_v", "classes", "rank", "n_train", "n_test", "noise_sigma", "features", "target"}
_TRAIN_KEYS = {"preset", "lr", "batch", "epochs", "beta1", "beta2", "eps"}
_CHECK_KEYS = {"converge", "converge_tol", "above_floor", "floor"}

_INT = {"n_img", "n_txt", "proj", "hidden", "classes", "d", "t_q", "t_v", "t_o", "rank",
        "n_q", "n_v", "n_train", "n_test", "batch", "epochs", "seed"}
_FLOAT = {"noise_sigma", "lr", "beta1", "beta2", "eps", "converge_tol", "floor"}
_BOOL = {"project", "normalize"}


@dataclass
class RunConfig:
    path: str
    seed: int
    name: str
    output: str | None
    model: dict
    fusions: list
    task: SynthTaskSpec | None = None
    train: object = None
    check: dict = field(default_factory=dict)

    def model_specs(self):
        """``[(head name, ModelSpec)]`` in file order."""
        out = []
        for name, fz in self.fusions:
            kw = dict(self.model)
            if self.task is not None:
                for key, val in (("n_txt", self.task.n_q), ("n_img", self.task.n_v), ("classes", self.task.classes)):
                    if key in kw and kw[key] != val:
                        raise ConfigurationError(f"{self.path}: [model] {key}={kw[key]} conflicts with [task] value {val}")
                    kw[key] = val
            missing = {"n_img", "n_txt", "hidden", "classes"} - kw.keys()
            if missing:
                raise ConfigurationError(f"{self.path}: [model] lacks {', '.join(sorted(missing))}")
            fz = dict(fz)
            if "project" in fz:
                kw["project"] = fz.pop("project")
            kw.setdefault("proj", None)
            try:
                out.append((name, ModelSpec(fusion=fz.pop("kind"), **kw, **fz)))
            except ConfigurationError as exc:
                raise ConfigurationError(f"{self.path}: [{name}] {exc}") from None
        return out


def _convert(section, key, raw):
    raw = raw.strip()
    try:
        if key in _INT:
            return int(raw)
        if key in _FLOAT:
            return float(raw)
    except ValueError:
        raise ConfigurationError(f"[{section}] {key} = {raw!r} is not a number") from None
    if key in _BOOL:
        low = raw.lower()
        if low not in ("true", "false", "yes", "no", "1", "0"):
            raise ConfigurationError(f"[{section}] {key} = {raw!r} is not a boolean")
        return low in ("true", "yes", "1")
    return raw


def _section(parser, name, allowed, path):
    items = dict(parser.items(name))
    unknown = set(items) - allowed
    if unknown:
        raise ConfigurationError(f"{path}: unknown key(s) in [{name}]: {', '.join(sorted(unknown))}")
    return {k: _convert(name, k, v) for k, v in items.items()}


def resolve_seed(config_seed, flag_seed=None):
    """Seed precedence: command-line flag, then $FUSIONBENCH_SEED, then the config."""
    if flag_seed is not None:
        return int(flag_seed)
    env = os.environ.get(SEED_ENV)
    if env is not None and env.strip():
        try:
            return int(env)
        except ValueError:
            raise ConfigurationError(f"${SEED_ENV}={env!r} is not an integer") from None
    return int(config_seed)


def load_config(path, seed=None):
    path = str(path)
    if not Path(path).is_file():
        raise ConfigurationError(f"config file not found: {path}")
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise ConfigurationError(f"{path}: {exc}") from None

    run, model, task, train, check, fusions = {}, {}, None, None, {}, []
    for name in parser.sections():
        if name == "run":
            run = _section(parser, name, _RUN_KEYS, path)
        elif name == "model":
            model = _section(parser, name, _MODEL_KEYS, path)
        elif name == "fusion" or name.startswith("fusion."):
            raw_kind = parser.get(name, "kind", fallback=None)
            if raw_kind is None:
                raise ConfigurationError(f"{path}: [{name}] needs a 'kind'")
            try:
                kind = FusionKind.parse(raw_kind)
            except ParameterError as exc:
                raise ConfigurationError(f"{path}: [{name}] {exc}") from None
            fz = _section(parser, name, _FUSION_KEYS[kind], path)
            fz["kind"] = kind
            label = name.split(".", 1)[1] if "." in name else kind.value
            fusions.append((label, fz))
        elif name == "task":
            task = _section(parser, name, _TASK_KEYS, path)
        elif name == "train":
            train = _section(parser, name, _TRAIN_KEYS, path)
        elif name == "check":
            check = _section(parser, name, _CHECK_KEYS, path)
        else:
            raise ConfigurationError(f"{path}: unknown section [{name}]")
    if not fusions:
        raise ConfigurationError(f"{path}: no [fusion] section")
    labels = [n for n, _ in fusions]
    if len(set(labels)) != len(labels):
        raise ConfigurationError(f"{path}: duplicate head names {labels}")

    seed = resolve_seed(run.get("seed", 0), seed)
    if seed < 0:
        raise ConfigurationError(f"seed must be non-negative, got {seed}")
    cfg = RunConfig(path=path, seed=seed, name=run.get("name", Path(path).stem), output=run.get("output"),
                    model=model, fusions=fusions, check=check)
    try:
        if task is not None:
            cfg.task = SynthTaskSpec(seed=seed, **task)
        if train is not None:
            preset = train.pop("preset", "desk")
            if preset not in PRESETS:
                raise ConfigurationError(f"{path}: unknown train preset {preset!r}; known: {', '.join(PRESETS)}")
            cfg.train = replace(PRESETS[preset], seed=seed + TRAIN_SEED_OFFSET, **train)
    except ParameterError as exc:
        raise ConfigurationError(f"{path}: {exc}") from None
    for key in ("converge", "above_floor"):
        if key in check:
            names = [s.strip() for s in str(check[key]).split(",") if s.strip()]
            bad = set(names) - set(labels)
            if bad:
                raise ConfigurationError(f"{path}: [check] {key} names unknown head(s) {sorted(bad)}")
            check[key] = names
    cfg.model_specs()  # validate every head up front
    return cfg


def bundled_config_dir():
    return Path(__file__).resolve().parent / "configs"


def bundled_config(name):
    return bundled_config_dir() / name
