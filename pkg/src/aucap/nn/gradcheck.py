"""Central finite-difference gradient checking.

``max_relative_error`` compares the analytic gradients of a scalar loss with
central differences on a sampled subset of coordinates per parameter. The
layer suite used by the CLI and the acceptance tests lives here too, so both
run the exact same checks.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .layers import BatchNorm, BiGRU, Dense, Embedding, GRUCellParams, gru_cell_step, run_gru
from .optim import zero_grads
from .tensor import Parameter, Tensor


def max_relative_error(loss_fn, params: list[Parameter], delta: float = 1e-5,
                       max_coords: int = 24, rng: np.random.RandomState | None = None,
                       tiny: float = 1e-6) -> float:
    """Worst relative error between analytic and central-difference gradients.

    ``loss_fn`` must rebuild the forward pass deterministically on each call.
    Coordinates are subsampled to ``max_coords`` per parameter. The
    denominator is floored at ``tiny``: below that magnitude the difference
    quotient is float64 roundoff, not signal.
    """
    rng = rng or np.random.RandomState(0)
    zero_grads(params)
    loss = loss_fn()
    T.backward(loss)
    analytic = {p.name: p.grad.copy() for p in params}
    worst = 0.0
    for p in params:
        flat = p.data.reshape(-1)
        n = flat.size
        coords = np.arange(n) if n <= max_coords else rng.choice(n, size=max_coords, replace=False)
        for c in coords:
            keep = flat[c]
            flat[c] = keep + delta
            hi = float(loss_fn().data)
            flat[c] = keep - delta
            lo = float(loss_fn().data)
            flat[c] = keep
            numeric = (hi - lo) / (2.0 * delta)
            a = analytic[p.name].reshape(-1)[c]
            denom = max(abs(a), abs(numeric), tiny)
            worst = max(worst, abs(a - numeric) / denom)
    zero_grads(params)
    return worst


def _quadratic_target(out: Tensor) -> Tensor:
    return T.mean_all(T.mul(out, out))


def _check_dense(rng):
    layer = Dense(7, 5, rng, name="gc.dense")
    x = Tensor(rng.standard_normal((4, 7)))
    return max_relative_error(lambda: _quadratic_target(layer(x)), layer.parameters(), rng=rng)


def _check_gru_cell(rng):
    cell = GRUCellParams.create(4, 3, rng, name="gc.cell")
    x = Tensor(rng.standard_normal((2, 4)))
    h = Tensor(rng.uniform(-0.9, 0.9, (2, 3)))
    return max_relative_error(
        lambda: _quadratic_target(gru_cell_step(x, h, cell)), cell.parameters(), rng=rng
    )


def _check_gru_sequence(rng):
    cell = GRUCellParams.create(5, 4, rng, name="gc.gru")
    steps = [Tensor(rng.standard_normal((3, 5))) for _ in range(4)]
    return max_relative_error(
        lambda: _quadratic_target(run_gru(steps, cell)), cell.parameters(), rng=rng
    )


def _check_bigru(rng):
    layer = BiGRU(4, 3, rng, name="gc.bigru")
    steps = [Tensor(rng.standard_normal((2, 4))) for _ in range(3)]
    return max_relative_error(
        lambda: _quadratic_target(T.concat(layer.run(steps, return_sequence=True), axis=0)),
        layer.parameters(), rng=rng,
    )


def _check_embedding(rng):
    layer = Embedding(9, 5, rng, name="gc.embed")
    idx = rng.randint(0, 9, size=6)
    return max_relative_error(
        lambda: _quadratic_target(layer(idx)), layer.parameters(), rng=rng
    )


def _check_batch_norm(rng):
    bn = BatchNorm(6, name="gc.bn")
    lin = Dense(6, 6, rng, name="gc.bnin")
    x = Tensor(rng.standard_normal((8, 6)))
    params = bn.parameters() + lin.parameters()
    return max_relative_error(
        lambda: _quadratic_target(bn(lin(x), mode="train", update_running=False)),
        params, rng=rng,
    )


def _check_softmax_xent(rng):
    layer = Dense(6, 5, rng, name="gc.sm")
    x = Tensor(rng.standard_normal((7, 6)))
    targets = rng.randint(0, 5, size=7)
    return max_relative_error(
        lambda: T.cross_entropy(T.softmax(layer(x)), targets), layer.parameters(), rng=rng
    )


def _check_mlp_stack(rng):
    from ..mlp import MLP, MLPConfig

    cfg = MLPConfig(input_dim=6, hidden_widths=(8, 5), output_dim=4, dropout=0.0)
    mlp = MLP(cfg, np.random.RandomState(rng.randint(1 << 31)))
    x = Tensor(rng.standard_normal((5, 6)))
    y = (rng.random_sample((5, 4)) > 0.5).astype(float)
    return max_relative_error(
        lambda: T.binary_cross_entropy(mlp.forward(x, mode="infer"), y),
        mlp.parameters(), rng=rng,
    )


def _check_micro_captioner(rng):
    from ..captioner import Captioner, CaptionerConfig

    cfg = CaptionerConfig(
        variant="logmel", audio_dim=6, sve_dim=3, bigru1=4, bigru2=4, text_gru=8,
        decoder_gru=8, embed_dim=8, dropout=0.0, batch_size=4, seed=9,
    )
    model = Captioner(vocab_size=10, config=cfg, rng=np.random.RandomState(rng.randint(1 << 31)))
    batch = 4
    audio = rng.standard_normal((batch, 5, 9))
    prefix = rng.randint(1, 10, size=(batch, 3))
    mask = np.ones((batch, 3))
    mask[0, 2] = 0.0  # one short prefix exercises the masked recurrence
    targets = rng.randint(0, 10, size=batch)

    def loss_fn():
        probs = model.forward(audio, prefix, mask, mode="train", update_running=False)
        return T.cross_entropy(probs, targets)

    return max_relative_error(loss_fn, model.parameters(), rng=rng, max_coords=6)


def run_suite(seed: int = 0) -> dict[str, float]:
    """Finite-difference check per layer type; returns max relative error each."""
    checks = {
        "dense": _check_dense,
        "gru_cell": _check_gru_cell,
        "gru_sequence": _check_gru_sequence,
        "bigru": _check_bigru,
        "embedding": _check_embedding,
        "batch_norm": _check_batch_norm,
        "softmax_cross_entropy": _check_softmax_xent,
        "mlp_stack": _check_mlp_stack,
        "micro_captioner": _check_micro_captioner,
    }
    return {name: fn(np.random.RandomState(seed + i)) for i, (name, fn) in enumerate(checks.items())}
