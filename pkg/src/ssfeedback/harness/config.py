"""INI experiment configuration.

Every key is optional; missing keys fall back to the defaults below.  Lists
are comma separated, (K, Q) pairs are written ``KxQ``::

    [site]
    n_t = 64
    cluster_centers = -0.25, 0.05, 0.3
    cluster_spread = 0.02
    path_count_min = 2
    path_count_max = 4
    gain_profile_db = -100, -110, -115
    gain_sigma_db = 3
    seed = 0

    [link]
    t_c = 1000
    t_ssb = 0
    p_t_dbm = 40
    bw_hz = 10e6
    noise_psd_dbm_hz = -170

    [schemes]
    oversample = 4
    k = 8
    q = 4
    n_p = 4

    [train]
    batch_size = 64
    step_beta = 0.05
    epochs = 200
    optimizer = sgd
    depth = 3
    width = 256
    noise_enabled = true
    noise_mu_db = 0
    noise_sigma_db = 1
    p_ssb = 1
    ridge_eps = 1e-6
    probing_init = dft

    [experiment]
    samples = 2000
    seed = 0
    workers = 1
    snr_db = -10:30:5
    cdf_snr_db = 10
    kq_list = 8x4, 16x4, 16x8
    k_list = 4, 8, 16
    q_list = 2, 4, 8
    angular_samples = 0, 1, 2
    grid_points = 256
"""

import configparser
import dataclasses
from dataclasses import dataclass, field

import numpy as np

from ssfeedback.channel import SiteModel
from ssfeedback.errors import ConfigError
from ssfeedback.probing import NoiseModel
from ssfeedback.schemes import LinkParams

SPLIT = (0.70, 0.15, 0.15)


@dataclass
class TrainSettings:
    batch_size: int = 64
    step_beta: float = 0.05
    epochs: int = 200
    optimizer: str = "sgd"
    depth: int = 3
    width: int = 256
    noise_enabled: bool = True
    noise_mu_db: float = 0.0
    noise_sigma_db: float = 1.0
    p_ssb: float = 1.0
    ridge_eps: float = 1e-6
    probing_init: str = "dft"
    clip_norm: float = None

    @property
    def noise(self):
        return NoiseModel(self.noise_mu_db, self.noise_sigma_db, self.p_ssb, self.noise_enabled)


@dataclass
class ExperimentConfig:
    site: SiteModel = field(default_factory=SiteModel)
    link: LinkParams = field(default_factory=LinkParams)
    oversample: int = 4
    k: int = 8
    q: int = 4
    n_p: int = 4
    train: TrainSettings = field(default_factory=TrainSettings)
    samples: int = 2000
    seed: int = 0
    workers: int = 1
    snr_db: tuple = tuple(range(-10, 31, 5))
    cdf_snr_db: float = 10.0
    kq_list: tuple = ((8, 4), (16, 4), (16, 8))
    k_list: tuple = (4, 8, 16)
    q_list: tuple = (2, 4, 8)
    angular_samples: tuple = (0, 1, 2)
    grid_points: int = 256
    out_dir: str = "out"

    def validate(self):
        n_t = self.site.n_t
        if self.samples < 3:
            raise ConfigError("samples must be >= 3 so every split is non-empty")
        if self.oversample < 1 or self.k < 1 or self.workers < 1:
            raise ConfigError("oversample, k and workers must be >= 1")
        for name, val in (("q", self.q), ("n_p", self.n_p)):
            if not 1 <= val <= n_t:
                raise ConfigError(f"{name}={val} outside [1, n_t={n_t}]")
        for k, q in self.kq_list:
            if k < 1 or not 1 <= q <= n_t:
                raise ConfigError(f"bad (K, Q) = ({k}, {q}) for n_t={n_t}")
        if any(q < 1 or q > n_t for q in self.q_list) or any(k < 1 for k in self.k_list):
            raise ConfigError("k_list/q_list entries out of range")
        if self.grid_points < 2:
            raise ConfigError("grid_points must be >= 2")
        if self.train.batch_size < 1 or self.train.step_beta <= 0 or self.train.epochs < 1:
            raise ConfigError("batch_size, step_beta and epochs must be positive")
        if self.train.optimizer not in ("sgd", "adam"):
            raise ConfigError(f"unknown optimizer {self.train.optimizer!r}")
        if self.train.probing_init not in ("dft", "random"):
            raise ConfigError(f"unknown probing_init {self.train.probing_init!r}")
        n_train = int(self.samples * SPLIT[0])
        if n_train < self.train.batch_size:
            raise ConfigError(f"training split {n_train} smaller than batch {self.train.batch_size}")
        return self

    def echo(self):
        """Plain-dict view for JSON summaries."""
        return {
            "site": dataclasses.asdict(self.site),
            "link": dataclasses.asdict(self.link),
            "schemes": {"oversample": self.oversample, "k": self.k, "q": self.q, "n_p": self.n_p},
            "train": dataclasses.asdict(self.train),
            "experiment": {
                "samples": self.samples, "seed": self.seed,
                "snr_db": list(self.snr_db), "cdf_snr_db": self.cdf_snr_db,
                "kq_list": [list(p) for p in self.kq_list], "k_list": list(self.k_list),
                "q_list": list(self.q_list), "angular_samples": list(self.angular_samples),
                "grid_points": self.grid_points,
            },
        }


def _floats(text):
    return tuple(float(t) for t in text.split(",") if t.strip())


def _ints(text):
    return tuple(int(t) for t in text.split(",") if t.strip())


def _kq(text):
    out = []
    for item in text.split(","):
        item = item.strip().lower()
        if not item:
            continue
        k, _, q = item.partition("x")
        out.append((int(k), int(q)))
    return tuple(out)


def _grid(text):
    """``start:stop:step`` (inclusive stop) or a comma list."""
    if ":" in text:
        a, b, c = (float(t) for t in text.split(":"))
        if c <= 0:
            raise ValueError("grid step must be positive")
        return tuple(float(v) for v in np.arange(a, b + c / 2, c))
    return _floats(text)


def _get(sec, key, conv, default):
    if sec is None or key not in sec:
        return default
    try:
        return conv(sec[key])
    except ValueError as exc:
        raise ConfigError(f"[{sec.name}] {key}: {exc}") from exc


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt_float(text):
    return None if text.strip().lower() in ("", "none") else float(text)


_KNOWN = {
    "site": {"n_t", "cluster_centers", "cluster_spread", "path_count_min", "path_count_max",
             "gain_profile_db", "gain_sigma_db", "seed"},
    "link": {"rho", "t_c", "t_ssb", "p_t_dbm", "bw_hz", "noise_psd_dbm_hz"},
    "schemes": {"oversample", "k", "q", "n_p"},
    "train": {f.name for f in dataclasses.fields(TrainSettings)},
    "experiment": {"samples", "seed", "workers", "snr_db", "cdf_snr_db", "kq_list", "k_list",
                   "q_list", "angular_samples", "grid_points"},
}


def parse_config(text):
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"unreadable config: {exc}") from exc
    for name in cp.sections():
        if name not in _KNOWN:
            raise ConfigError(f"unknown section [{name}]")
        extra = set(cp[name]) - _KNOWN[name]
        if extra:
            raise ConfigError(f"unknown keys in [{name}]: {', '.join(sorted(extra))}")
    sec = {n: (cp[n] if cp.has_section(n) else None) for n in _KNOWN}
    d = SiteModel()
    s = sec["site"]
    try:
        site = SiteModel(
            n_t=_get(s, "n_t", int, d.n_t),
            cluster_centers=_get(s, "cluster_centers", _floats, d.cluster_centers),
            cluster_spread=_get(s, "cluster_spread", float, d.cluster_spread),
            path_count_range=(_get(s, "path_count_min", int, d.path_count_range[0]),
                              _get(s, "path_count_max", int, d.path_count_range[1])),
            gain_profile_db=_get(s, "gain_profile_db", _floats, d.gain_profile_db),
            gain_sigma_db=_get(s, "gain_sigma_db", float, d.gain_sigma_db),
            seed=_get(s, "seed", int, d.seed),
        )
        ln = sec["link"]
        dl = LinkParams()
        link = LinkParams(
            rho=_get(ln, "rho", _opt_float, None),
            t_c=_get(ln, "t_c", int, dl.t_c),
            t_ssb=_get(ln, "t_ssb", int, dl.t_ssb),
            p_t_dbm=_get(ln, "p_t_dbm", float, dl.p_t_dbm),
            bw_hz=_get(ln, "bw_hz", float, dl.bw_hz),
            noise_psd_dbm_hz=_get(ln, "noise_psd_dbm_hz", float, dl.noise_psd_dbm_hz),
        )
        tr = sec["train"]
        convs = {"int": int, "float": float, "str": str.strip, "bool": _bool}
        kwargs = {}
        for f in dataclasses.fields(TrainSettings):
            if f.name == "clip_norm":
                kwargs[f.name] = _get(tr, f.name, _opt_float, None)
            else:
                kwargs[f.name] = _get(tr, f.name, convs[type(f.default).__name__], f.default)
        train = TrainSettings(**kwargs)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    sc, ex = sec["schemes"], sec["experiment"]
    de = ExperimentConfig
    cfg = ExperimentConfig(
        site=site, link=link,
        oversample=_get(sc, "oversample", int, 4),
        k=_get(sc, "k", int, 8),
        q=_get(sc, "q", int, 4),
        n_p=_get(sc, "n_p", int, 4),
        train=train,
        samples=_get(ex, "samples", int, 2000),
        seed=_get(ex, "seed", int, 0),
        workers=_get(ex, "workers", int, 1),
        snr_db=_get(ex, "snr_db", _grid, de.snr_db),
        cdf_snr_db=_get(ex, "cdf_snr_db", float, 10.0),
        kq_list=_get(ex, "kq_list", _kq, de.kq_list),
        k_list=_get(ex, "k_list", _ints, de.k_list),
        q_list=_get(ex, "q_list", _ints, de.q_list),
        angular_samples=_get(ex, "angular_samples", _ints, de.angular_samples),
        grid_points=_get(ex, "grid_points", int, 256),
    )
    return cfg.validate()


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    return parse_config(text)
