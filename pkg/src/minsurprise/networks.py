"""Genome encoding and the paired per-robot networks.

Each robot runs two small networks decoded from one flat genome: a
feedforward action network (12 sensors + previous action -> move/turn +
turn direction) and a recurrent prediction network (12 sensors + chosen
action -> 12 predicted next-step sensor values), with per-unit
self-recurrent hidden connections only.

Weight layout (canonical decode order, per network): input-to-hidden
row-major by input, hidden biases, hidden self-loop weights (prediction
net only), hidden-to-output row-major by hidden unit, output biases.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .world import SENSOR_COUNT, ActionCommand

HIDDEN_UNITS = 8
NET_INPUTS = SENSOR_COUNT + 1  # sensors plus one action input
ACTION_OUTPUTS = 2
PREDICTION_OUTPUTS = SENSOR_COUNT

ACTION_LENGTH = (
    NET_INPUTS * HIDDEN_UNITS + HIDDEN_UNITS
    + HIDDEN_UNITS * ACTION_OUTPUTS + ACTION_OUTPUTS
)  # 130
PREDICTION_LENGTH = (
    NET_INPUTS * HIDDEN_UNITS + HIDDEN_UNITS + HIDDEN_UNITS
    + HIDDEN_UNITS * PREDICTION_OUTPUTS + PREDICTION_OUTPUTS
)  # 228
GENOME_LENGTH = ACTION_LENGTH + PREDICTION_LENGTH  # 358

WEIGHT_LIMIT = 5.0

GENOME_HEADER = "minsurprise-genome v1"


class MalformedGenomeError(ValueError):
    pass


def _check_weights(name: str, w: np.ndarray, expected: int) -> np.ndarray:
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (expected,):
        raise MalformedGenomeError(
            f"{name} must have {expected} weights, got shape {w.shape}"
        )
    if not np.all(np.isfinite(w)):
        raise MalformedGenomeError(f"{name} contains non-finite weights")
    if np.any(np.abs(w) > WEIGHT_LIMIT):
        raise MalformedGenomeError(f"{name} exceeds weight limit {WEIGHT_LIMIT}")
    return w


@dataclass(frozen=True)
class Genome:
    """Flat weight vectors for the action and prediction networks."""

    action_weights: np.ndarray
    prediction_weights: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "action_weights",
            _check_weights("action_weights", self.action_weights, ACTION_LENGTH),
        )
        object.__setattr__(
            self, "prediction_weights",
            _check_weights(
                "prediction_weights", self.prediction_weights, PREDICTION_LENGTH
            ),
        )


@dataclass(frozen=True)
class ActionNetwork:
    w_hidden: np.ndarray  # (13, 8)
    b_hidden: np.ndarray  # (8,)
    w_out: np.ndarray  # (8, 2)
    b_out: np.ndarray  # (2,)


@dataclass(frozen=True)
class PredictionNetwork:
    w_hidden: np.ndarray  # (13, 8)
    b_hidden: np.ndarray  # (8,)
    w_self: np.ndarray  # (8,) per-unit recurrent weights
    w_out: np.ndarray  # (8, 12)
    b_out: np.ndarray  # (12,)


def decode(genome: Genome) -> tuple[ActionNetwork, PredictionNetwork]:
    """Split the flat weight vectors into network matrices."""
    a = genome.action_weights
    i = 0
    w_hidden = a[i:i + NET_INPUTS * HIDDEN_UNITS].reshape(NET_INPUTS, HIDDEN_UNITS)
    i += NET_INPUTS * HIDDEN_UNITS
    b_hidden = a[i:i + HIDDEN_UNITS]
    i += HIDDEN_UNITS
    w_out = a[i:i + HIDDEN_UNITS * ACTION_OUTPUTS].reshape(HIDDEN_UNITS, ACTION_OUTPUTS)
    i += HIDDEN_UNITS * ACTION_OUTPUTS
    b_out = a[i:i + ACTION_OUTPUTS]
    action = ActionNetwork(w_hidden, b_hidden, w_out, b_out)

    p = genome.prediction_weights
    i = 0
    pw_hidden = p[i:i + NET_INPUTS * HIDDEN_UNITS].reshape(NET_INPUTS, HIDDEN_UNITS)
    i += NET_INPUTS * HIDDEN_UNITS
    pb_hidden = p[i:i + HIDDEN_UNITS]
    i += HIDDEN_UNITS
    w_self = p[i:i + HIDDEN_UNITS]
    i += HIDDEN_UNITS
    pw_out = p[i:i + HIDDEN_UNITS * PREDICTION_OUTPUTS].reshape(
        HIDDEN_UNITS, PREDICTION_OUTPUTS
    )
    i += HIDDEN_UNITS * PREDICTION_OUTPUTS
    pb_out = p[i:i + PREDICTION_OUTPUTS]
    prediction = PredictionNetwork(pw_hidden, pb_hidden, w_self, pw_out, pb_out)
    return action, prediction


def encode(action: ActionNetwork, prediction: PredictionNetwork) -> Genome:
    """Inverse of decode."""
    aw = np.concatenate([
        action.w_hidden.reshape(-1), action.b_hidden,
        action.w_out.reshape(-1), action.b_out,
    ])
    pw = np.concatenate([
        prediction.w_hidden.reshape(-1), prediction.b_hidden, prediction.w_self,
        prediction.w_out.reshape(-1), prediction.b_out,
    ])
    return Genome(aw, pw)


def random_genome(rng: np.random.Generator) -> Genome:
    """Fresh genome with every weight uniform in [-1, 1]."""
    return Genome(
        rng.uniform(-1.0, 1.0, ACTION_LENGTH),
        rng.uniform(-1.0, 1.0, PREDICTION_LENGTH),
    )


def stable_rows_matmul(x: np.ndarray, w: np.ndarray,
                       out: np.ndarray | None = None) -> np.ndarray:
    """x @ w with a guaranteed row count of at least 2.

    BLAS routes single-row products through a different kernel (gemv) whose
    rounding can differ from gemm in the last ulp; padding keeps every
    forward pass bit-identical no matter how calls are batched.
    """
    if x.shape[-2] >= 2:
        return np.matmul(x, w, out=out)
    pad = [(0, 0)] * x.ndim
    pad[-2] = (0, 2 - x.shape[-2])
    padded = np.pad(x, pad)
    result = (padded @ w)[..., : x.shape[-2], :]
    if out is None:
        return result
    out[...] = result
    return out


def sigmoid(x: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-x))


def sigmoid_inplace(x: np.ndarray) -> np.ndarray:
    """In-place sigmoid with the same per-element operation order as
    ``sigmoid``, so results are bit-identical."""
    with np.errstate(over="ignore"):
        np.negative(x, out=x)
        np.exp(x, out=x)
        np.add(x, 1.0, out=x)
        np.reciprocal(x, out=x)
    return x


@dataclass
class ControllerState:
    """Per-robot mutable state, reset at every simulation start."""

    last_action: float = 0.0
    hidden: np.ndarray = field(
        default_factory=lambda: np.zeros(HIDDEN_UNITS, dtype=np.float64)
    )


def act(net: ActionNetwork, sensors: np.ndarray,
        state: ControllerState) -> ActionCommand:
    """Run the action network once and update last_action.

    Outputs pass through a sigmoid; >= 0.5 selects move for the first output
    and +90 degrees for the second.
    """
    x = np.empty((1, NET_INPUTS), dtype=np.float64)
    x[0, :SENSOR_COUNT] = sensors
    x[0, SENSOR_COUNT] = state.last_action
    hidden = np.tanh(stable_rows_matmul(x, net.w_hidden) + net.b_hidden)
    out = sigmoid(stable_rows_matmul(hidden, net.w_out) + net.b_out)[0]
    action = 1 if out[0] >= 0.5 else 0
    turn_dir = 1 if out[1] >= 0.5 else -1
    state.last_action = float(action)
    return ActionCommand(action, turn_dir)


def predict(net: PredictionNetwork, sensors: np.ndarray, action: int,
            state: ControllerState) -> np.ndarray:
    """Run the prediction network once, updating the recurrent hidden state.

    Returns the 12 predicted sensor values for the next time step, each in
    [0, 1].
    """
    x = np.empty((1, NET_INPUTS), dtype=np.float64)
    x[0, :SENSOR_COUNT] = sensors
    x[0, SENSOR_COUNT] = float(action)
    pre = stable_rows_matmul(x, net.w_hidden) + net.w_self * state.hidden + net.b_hidden
    hidden = np.tanh(pre)
    out = sigmoid(stable_rows_matmul(hidden, net.w_out) + net.b_out)[0]
    state.hidden = hidden[0]
    return out


class Scenario(enum.Enum):
    """Prediction regime: evolved predictions, or a fixed target vector."""

    EMERGENT = "emergent"
    PAIRS = "pairs"
    CLUSTERS = "clusters"
    EMPTY = "empty"


def scenario_prediction(scenario: Scenario) -> np.ndarray:
    """Fixed prediction vector of a predefined scenario.

    Robot-sensor components are 0 in every predefined scenario; the block
    bank is 1 on the two straight-ahead cells for PAIRS, all ones for
    CLUSTERS, and all zeros for EMPTY.
    """
    if scenario is Scenario.EMERGENT:
        raise ValueError("emergent scenario has no fixed prediction vector")
    p = np.zeros(SENSOR_COUNT, dtype=np.float64)
    if scenario is Scenario.PAIRS:
        p[6] = 1.0
        p[9] = 1.0
    elif scenario is Scenario.CLUSTERS:
        p[6:] = 1.0
    return p


def save_genome(path, genome: Genome) -> None:
    """Write the genome file: header line, then weights at 17 significant
    digits, action weights first, eight per line."""
    weights = np.concatenate([genome.action_weights, genome.prediction_weights])
    lines = [f"{GENOME_HEADER} {ACTION_LENGTH} {PREDICTION_LENGTH}"]
    for i in range(0, len(weights), 8):
        lines.append(" ".join(format(w, ".17g") for w in weights[i:i + 8]))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def load_genome(path) -> Genome:
    """Parse a genome file written by save_genome."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        parts = header.split()
        if parts[:2] != GENOME_HEADER.split() or len(parts) != 4:
            raise MalformedGenomeError(f"bad genome header: {header!r}")
        try:
            a_len, p_len = int(parts[2]), int(parts[3])
        except ValueError as exc:
            raise MalformedGenomeError(f"bad genome header: {header!r}") from exc
        if (a_len, p_len) != (ACTION_LENGTH, PREDICTION_LENGTH):
            raise MalformedGenomeError(
                f"genome topology mismatch: file has {a_len}+{p_len} weights, "
                f"expected {ACTION_LENGTH}+{PREDICTION_LENGTH}"
            )
        try:
            weights = np.array(fh.read().split(), dtype=np.float64)
        except ValueError as exc:
            raise MalformedGenomeError("unparsable weight value") from exc
    if len(weights) != a_len + p_len:
        raise MalformedGenomeError(
            f"expected {a_len + p_len} weights, found {len(weights)}"
        )
    return Genome(weights[:a_len], weights[a_len:])
