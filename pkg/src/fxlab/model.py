"""Forecasting model: variable selection, multi-scale convolution, channel
recalibration, trend-aware attention, recurrent decoder.

The forward pass maps a window of F covariates over T days to a one-step-ahead
return forecast:

  1. each covariate gets its own scalar-to-vector embedding; a shared scoring
     vector plus a softmax across variables yields per-step selection weights,
     and the weighted embeddings are concatenated;
  2. three parallel length-preserving convolutions (different kernel widths)
     mix the concatenated channels, are concatenated, dropped out, and
     projected to the model width D = heads * factor;
  3. a squeeze-excite gate rescales channels using temporal means;
  4. attention queries/keys come from per-branch temporal convolutions (widths
     matching the conv kernels) instead of pointwise projections, values from
     one shared linear map; per-head scaled dot-product outputs from the three
     branches are concatenated and fused back to width D;
  5. a position-wise feed-forward layer and a single GRU pass summarize the
     window; the final state maps linearly to the forecast.

Every stage has an ablation switch. Disabling selection fixes uniform weights
and leaves the scoring parameters out of the graph; disabling the conv stack
substitutes one pointwise linear map; disabling squeeze-excite passes the
tensor through untouched; disabling trend attention swaps in standard
multi-head attention with linear Q/K projections and a DxD output map.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, DimensionError

QK_CONV_MODES = ("grouped", "full")
ABLATIONS = ("full", "no_dvs", "no_msc", "no_se", "standard_attention")


@dataclass(frozen=True)
class ModelConfig:
    n_covariates: int
    window: int
    heads: int = 1
    factor: int = 16
    embed_dim: int | None = None
    kernel_sizes: tuple[int, int, int] = (3, 5, 7)
    se_reduction: int = 4
    dropout: float = 0.1
    use_dvs: bool = True
    use_msc: bool = True
    use_se: bool = True
    trend_attention: bool = True
    qk_conv: str = "grouped"
    ffn_dropout: bool = False

    def __post_init__(self):
        if self.n_covariates < 1:
            raise ConfigError(f"n_covariates must be >= 1, got {self.n_covariates}")
        if self.window < 1:
            raise ConfigError(f"window must be >= 1, got {self.window}")
        if self.heads < 1 or self.factor < 1:
            raise ConfigError(f"heads and factor must be >= 1, got {self.heads}, {self.factor}")
        if self.embed_dim is not None and self.embed_dim < 1:
            raise ConfigError(f"embed_dim must be >= 1, got {self.embed_dim}")
        if len(self.kernel_sizes) != 3 or any(k < 1 for k in self.kernel_sizes):
            raise ConfigError(f"kernel_sizes must be three widths >= 1, got {self.kernel_sizes}")
        if self.se_reduction < 1:
            raise ConfigError(f"se_reduction must be >= 1, got {self.se_reduction}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.qk_conv not in QK_CONV_MODES:
            raise ConfigError(f"qk_conv must be one of {QK_CONV_MODES}, got {self.qk_conv!r}")
        object.__setattr__(self, "kernel_sizes", tuple(int(k) for k in self.kernel_sizes))

    @property
    def hidden(self) -> int:
        """Model width D."""
        return self.heads * self.factor

    @property
    def embed(self) -> int:
        return self.factor if self.embed_dim is None else self.embed_dim

    @property
    def ffn_width(self) -> int:
        return 2 * self.hidden

    @property
    def se_bottleneck(self) -> int:
        return max(1, self.hidden // self.se_reduction)

    def variant_name(self) -> str:
        if not self.use_dvs:
            return "no_dvs"
        if not self.use_msc:
            return "no_msc"
        if not self.use_se:
            return "no_se"
        if not self.trend_attention:
            return "standard_attention"
        return "full"


def ablation_config(base: ModelConfig, variant: str) -> ModelConfig:
    if variant == "full":
        return replace(base, use_dvs=True, use_msc=True, use_se=True, trend_attention=True)
    if variant == "no_dvs":
        return replace(base, use_dvs=False, use_msc=True, use_se=True, trend_attention=True)
    if variant == "no_msc":
        return replace(base, use_dvs=True, use_msc=False, use_se=True, trend_attention=True)
    if variant == "no_se":
        return replace(base, use_dvs=True, use_msc=True, use_se=False, trend_attention=True)
    if variant == "standard_attention":
        return replace(base, use_dvs=True, use_msc=True, use_se=True, trend_attention=False)
    raise ConfigError(f"unknown ablation {variant!r}, expected one of {ABLATIONS}")


class ParameterStore:
    """Named float64 parameter tensors with stable insertion order."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}

    def add(self, name: str, array: np.ndarray) -> Tensor:
        if name in self._params:
            raise ConfigError(f"duplicate parameter {name!r}")
        t = Tensor(np.asarray(array, dtype=np.float64), requires_grad=True)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def names(self) -> list[str]:
        return list(self._params)

    def tensors(self) -> list[Tensor]:
        return list(self._params.values())

    def total_size(self) -> int:
        return sum(t.data.size for t in self._params.values())

    def zero_grad(self) -> None:
        for t in self._params.values():
            t.grad = None

    def state(self) -> dict[str, np.ndarray]:
        return {k: t.data.copy() for k, t in self._params.items()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        if set(state) != set(self._params):
            missing = set(self._params) - set(state)
            extra = set(state) - set(self._params)
            raise ConfigError(f"state mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}")
        for k, arr in state.items():
            arr = np.asarray(arr, dtype=np.float64)
            if arr.shape != self._params[k].data.shape:
                raise DimensionError(
                    f"parameter {k!r}: stored shape {arr.shape} vs expected {self._params[k].data.shape}")
            self._params[k].data = arr.copy()


def _uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = math.sqrt(1.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_params(config: ModelConfig, rng: np.random.Generator) -> ParameterStore:
    """Allocate exactly the parameters the configured forward pass consumes.

    Weights are uniform +-sqrt(1/fan_in); biases start at zero. Allocation
    order is fixed so a given seed always yields the same parameters.
    """
    store = ParameterStore()
    f, de, d = config.n_covariates, config.embed, config.hidden
    dd = config.factor

    for i in range(f):
        store.add(f"select.embed.{i}.w", _uniform(rng, (1, de), 1))
        store.add(f"select.embed.{i}.b", np.zeros(de))
    if config.use_dvs:
        store.add("select.score.w", _uniform(rng, (de, 1), de))
        store.add("select.score.b", np.zeros(1))

    c_in = f * de
    if config.use_msc:
        for j, k in enumerate(config.kernel_sizes):
            store.add(f"conv.branch{j}.w", _uniform(rng, (d, c_in, k), c_in * k))
            store.add(f"conv.branch{j}.b", np.zeros(d))
        store.add("conv.proj.w", _uniform(rng, (3 * d, d), 3 * d))
        store.add("conv.proj.b", np.zeros(d))
    else:
        store.add("mix.w", _uniform(rng, (c_in, d), c_in))
        store.add("mix.b", np.zeros(d))

    if config.use_se:
        store.add("se.w1", _uniform(rng, (d, config.se_bottleneck), d))
        store.add("se.w2", _uniform(rng, (config.se_bottleneck, d), config.se_bottleneck))

    if config.trend_attention:
        for j, k in enumerate(config.kernel_sizes):
            for gate in ("q", "k"):
                if config.qk_conv == "grouped":
                    for h in range(config.heads):
                        store.add(f"attn.branch{j}.{gate}.head{h}.w",
                                  _uniform(rng, (dd, dd, k), dd * k))
                        store.add(f"attn.branch{j}.{gate}.head{h}.b", np.zeros(dd))
                else:
                    store.add(f"attn.branch{j}.{gate}.w", _uniform(rng, (d, d, k), d * k))
                    store.add(f"attn.branch{j}.{gate}.b", np.zeros(d))
        store.add("attn.v.w", _uniform(rng, (d, d), d))
        store.add("attn.v.b", np.zeros(d))
        store.add("attn.fuse.w", _uniform(rng, (3 * d, d), 3 * d))
        store.add("attn.fuse.b", np.zeros(d))
    else:
        for gate in ("q", "k"):
            store.add(f"attn.{gate}.w", _uniform(rng, (d, d), d))
            store.add(f"attn.{gate}.b", np.zeros(d))
        store.add("attn.v.w", _uniform(rng, (d, d), d))
        store.add("attn.v.b", np.zeros(d))
        store.add("attn.out.w", _uniform(rng, (d, d), d))
        store.add("attn.out.b", np.zeros(d))

    store.add("ffn.w1", _uniform(rng, (d, config.ffn_width), d))
    store.add("ffn.b1", np.zeros(config.ffn_width))
    store.add("ffn.w2", _uniform(rng, (config.ffn_width, d), config.ffn_width))
    store.add("ffn.b2", np.zeros(d))

    for gate in ("z", "r", "h"):
        store.add(f"gru.w{gate}", _uniform(rng, (d, d), d))
        store.add(f"gru.u{gate}", _uniform(rng, (d, d), d))
        store.add(f"gru.b{gate}", np.zeros(d))

    store.add("head.w", _uniform(rng, (d, 1), d))
    store.add("head.b", np.zeros(1))
    return store


def parameter_count(config: ModelConfig) -> int:
    """Closed-form size of the parameter set the forward pass consumes."""
    f, de, d = config.n_covariates, config.embed, config.hidden
    dd, ks = config.factor, config.kernel_sizes
    n = f * 2 * de
    if config.use_dvs:
        n += de + 1
    c_in = f * de
    if config.use_msc:
        n += sum(d * c_in * k + d for k in ks) + (3 * d * d + d)
    else:
        n += c_in * d + d
    if config.use_se:
        n += 2 * d * config.se_bottleneck
    if config.trend_attention:
        per_branch_qk = (config.heads * dd * dd if config.qk_conv == "grouped" else d * d)
        n += sum(2 * (per_branch_qk * k + d) for k in ks)
        n += d * d + d          # shared value map
        n += 3 * d * d + d      # branch fusion
    else:
        n += 2 * (d * d + d)    # q, k
        n += d * d + d          # v
        n += d * d + d          # output projection
    n += d * config.ffn_width + config.ffn_width + config.ffn_width * d + d
    n += 3 * (2 * d * d + d)
    n += d + 1
    return n


@dataclass
class ForwardResult:
    pred: Tensor                      # (B,)
    omega: np.ndarray                 # (B, T, F) selection weights
    activations: dict | None = None


def _split_heads(t: Tensor, b: int, t_len: int, heads: int, width: int) -> Tensor:
    return ad.transpose(ad.reshape(t, (b, t_len, heads, width)), (0, 2, 1, 3))


def _merge_heads(t: Tensor, b: int, t_len: int, d: int) -> Tensor:
    return ad.reshape(ad.transpose(t, (0, 2, 1, 3)), (b, t_len, d))


def _attend(q: Tensor, k: Tensor, v: Tensor, width: int) -> Tensor:
    scores = ad.scale(ad.matmul(q, ad.transpose(k, (0, 1, 3, 2))), 1.0 / math.sqrt(width))
    return ad.matmul(ad.softmax(scores, axis=-1), v)


def model_forward(store: ParameterStore, config: ModelConfig, x: np.ndarray,
                  training: bool = False, rng: np.random.Generator | None = None,
                  collect: bool = False) -> ForwardResult:
    """Run the model on a (B, T, F) window batch."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3:
        raise DimensionError(f"input must be (batch, window, covariates), got {x.shape}")
    b, t_len, f = x.shape
    if t_len != config.window or f != config.n_covariates:
        raise DimensionError(
            f"input {x.shape} vs config window={config.window}, n_covariates={config.n_covariates}")
    if training and config.dropout > 0.0 and rng is None:
        raise ConfigError("training forward with dropout needs an rng")
    d, de, heads = config.hidden, config.embed, config.heads
    dd = config.factor
    xs = Tensor(x)
    acts: dict | None = {} if collect else None

    # --- variable selection ------------------------------------------------
    embeds = []
    for i in range(f):
        xi = ad.narrow(xs, 2, i, 1)
        embeds.append(ad.add(ad.matmul(xi, store[f"select.embed.{i}.w"]),
                             store[f"select.embed.{i}.b"]))
    if config.use_dvs:
        scores = ad.concat(
            [ad.add(ad.matmul(e, store["select.score.w"]), store["select.score.b"])
             for e in embeds], axis=2)
        omega = ad.softmax(scores, axis=-1)
        weighted = [ad.mul(e, ad.narrow(omega, 2, i, 1)) for i, e in enumerate(embeds)]
        omega_data = omega.data
    else:
        weighted = [ad.scale(e, 1.0 / f) for e in embeds]
        omega_data = np.full((b, t_len, f), 1.0 / f)
    selected = ad.concat(weighted, axis=2)  # (B, T, F*De)
    if acts is not None:
        acts["selected"] = selected.data

    # --- multi-scale convolution --------------------------------------------
    if config.use_msc:
        channels_first = ad.transpose(selected, (0, 2, 1))
        branches = [
            ad.relu(ad.conv1d_same(channels_first, store[f"conv.branch{j}.w"],
                                   store[f"conv.branch{j}.b"]))
            for j in range(len(config.kernel_sizes))
        ]
        stacked = ad.transpose(ad.concat(branches, axis=1), (0, 2, 1))  # (B, T, 3D)
        stacked = ad.dropout(stacked, config.dropout, training, rng)
        hidden = ad.add(ad.matmul(stacked, store["conv.proj.w"]), store["conv.proj.b"])
    else:
        hidden = ad.add(ad.matmul(selected, store["mix.w"]), store["mix.b"])
    if acts is not None:
        acts["conv"] = hidden.data

    # --- squeeze-excite gate --------------------------------------------------
    if config.use_se:
        pooled = ad.mean_pool_time(hidden)  # (B, D)
        gate = ad.sigmoid(ad.matmul(ad.relu(ad.matmul(pooled, store["se.w1"])), store["se.w2"]))
        hidden = ad.mul(hidden, ad.reshape(gate, (b, 1, d)))
        if acts is not None:
            acts["se_gate"] = gate.data
    if acts is not None:
        acts["recalibrated"] = hidden.data

    # --- attention --------------------------------------------------------------
    value = ad.add(ad.matmul(hidden, store["attn.v.w"]), store["attn.v.b"])
    value_h = _split_heads(value, b, t_len, heads, dd)
    if config.trend_attention:
        channels_first = ad.transpose(hidden, (0, 2, 1))  # (B, D, T)
        branch_outs = []
        for j in range(len(config.kernel_sizes)):
            qk = {}
            for gate in ("q", "k"):
                if config.qk_conv == "grouped":
                    blocks = []
                    for h in range(heads):
                        block = ad.narrow(channels_first, 1, h * dd, dd)
                        blocks.append(ad.conv1d_same(
                            block, store[f"attn.branch{j}.{gate}.head{h}.w"],
                            store[f"attn.branch{j}.{gate}.head{h}.b"]))
                    conv = ad.concat(blocks, axis=1)
                else:
                    conv = ad.conv1d_same(channels_first, store[f"attn.branch{j}.{gate}.w"],
                                          store[f"attn.branch{j}.{gate}.b"])
                qk[gate] = _split_heads(ad.transpose(conv, (0, 2, 1)), b, t_len, heads, dd)
            branch_outs.append(_merge_heads(_attend(qk["q"], qk["k"], value_h, dd), b, t_len, d))
        merged = ad.concat(branch_outs, axis=2)  # (B, T, 3D)
        attended = ad.add(ad.matmul(merged, store["attn.fuse.w"]), store["attn.fuse.b"])
    else:
        q = _split_heads(ad.add(ad.matmul(hidden, store["attn.q.w"]), store["attn.q.b"]),
                         b, t_len, heads, dd)
        k = _split_heads(ad.add(ad.matmul(hidden, store["attn.k.w"]), store["attn.k.b"]),
                         b, t_len, heads, dd)
        merged = _merge_heads(_attend(q, k, value_h, dd), b, t_len, d)
        attended = ad.add(ad.matmul(merged, store["attn.out.w"]), store["attn.out.b"])
    attended = ad.dropout(attended, config.dropout, training, rng)
    if acts is not None:
        acts["attended"] = attended.data

    # --- decoder -------------------------------------------------------------
    ff = ad.add(ad.matmul(attended, store["ffn.w1"]), store["ffn.b1"])
    ff = ad.relu(ff)
    if config.ffn_dropout:
        ff = ad.dropout(ff, config.dropout, training, rng)
    ff = ad.add(ad.matmul(ff, store["ffn.w2"]), store["ffn.b2"])

    gru_params = {f"{w}{g}": store[f"gru.{w}{g}"] for g in ("z", "r", "h") for w in ("w", "u", "b")}
    state = Tensor(np.zeros((b, d)))
    for step in range(t_len):
        x_t = ad.reshape(ad.narrow(ff, 1, step, 1), (b, d))
        state = ad.gru_cell(x_t, state, gru_params)
    if acts is not None:
        acts["final_state"] = state.data

    pred = ad.reshape(ad.add(ad.matmul(state, store["head.w"]), store["head.b"]), (b,))
    return ForwardResult(pred=pred, omega=omega_data, activations=acts)


def predict(store: ParameterStore, config: ModelConfig, x: np.ndarray) -> np.ndarray:
    """Deterministic eval-mode point forecasts."""
    return model_forward(store, config, x, training=False).pred.data.copy()


# ---------------------------------------------------------------------------
# checkpoints

CHECKPOINT_VERSION = 1


def save_checkpoint(path: str | Path, store: ParameterStore, config: ModelConfig,
                    meta: dict | None = None) -> None:
    """Versioned binary dump; float64 arrays round-trip bit-exactly."""
    header = {
        "format_version": CHECKPOINT_VERSION,
        "config": asdict(config),
        "meta": meta or {},
    }
    arrays = {f"param::{name}": store[name].data for name in store.names()}
    with open(path, "wb") as fh:
        np.savez(fh, __header__=np.frombuffer(json.dumps(header).encode(), dtype=np.uint8),
                 **arrays)


def load_checkpoint(path: str | Path) -> tuple[ParameterStore, ModelConfig, dict]:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"checkpoint not found: {path}")
    with np.load(path) as bundle:
        if "__header__" not in bundle:
            raise ConfigError(f"{path}: not a checkpoint (missing header)")
        header = json.loads(bundle["__header__"].tobytes().decode())
        if header.get("format_version") != CHECKPOINT_VERSION:
            raise ConfigError(f"{path}: unsupported checkpoint version {header.get('format_version')}")
        cfg_dict = dict(header["config"])
        cfg_dict["kernel_sizes"] = tuple(cfg_dict["kernel_sizes"])
        config = ModelConfig(**cfg_dict)
        store = init_params(config, np.random.default_rng(0))
        state = {key[len("param::"):]: bundle[key] for key in bundle.files if key.startswith("param::")}
        store.load_state(state)
    return store, config, header.get("meta", {})
