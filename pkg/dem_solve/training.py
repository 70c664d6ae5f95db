import logging
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np
import torch

from .diffengine import DiffProgram, as_tensor, value_and_parameter_gradient
from .errors import NonFiniteLossError

logger = logging.getLogger(__name__)

STOP_REASONS = ("max_epochs", "converged", "non_finite")
MAX_HALVINGS = 10


@dataclass(frozen=True)
class TrainConfig:
    """
    L-BFGS settings.

    learning_rate scales only the steepest-descent step taken when the memory
    is empty (the first update and after a memory reset); quasi-Newton updates
    start from the unit step. seed is the run seed: it seeds torch's generator
    before the first evaluation and, in experiment configs, the network init.
    """

    learning_rate: float = 0.01
    max_epochs: int = 20
    inner_iters_per_epoch: int = 20
    rel_loss_tol: float = 5e-5
    history_size: int = 10
    seed: int = 0

    def __post_init__(self):
        for name in ("max_epochs", "inner_iters_per_epoch", "history_size", "seed"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
                raise ValueError(f"train.{name} must be an integer, got {value!r}")
        for name in ("learning_rate", "rel_loss_tol"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ValueError(f"train.{name} must be a number, got {value!r}")
        for name in ("learning_rate", "max_epochs", "inner_iters_per_epoch", "rel_loss_tol", "history_size"):
            if not getattr(self, name) > 0:
                raise ValueError(f"train.{name} must be > 0, got {getattr(self, name)}")
        if self.seed < 0:
            raise ValueError(f"train.seed must be >= 0, got {self.seed}")


@dataclass
class TrainReport:
    loss_history: List[float]
    wall_time: float
    stop_reason: str
    diverged: bool
    localization_metric: float = 0.0
    final_U: Optional[np.ndarray] = None
    epoch_losses: List[float] = field(default_factory=list)
    n_updates: int = 0

    @property
    def final_loss(self) -> float:
        return self.loss_history[-1]


def _two_loop(g: np.ndarray, S: deque, Y: deque) -> np.ndarray:
    """-H g by the L-BFGS two-loop recursion."""
    q = g.copy()
    alphas = []
    for s, y in zip(reversed(S), reversed(Y)):
        rho = 1.0 / float(y @ s)
        a = rho * float(s @ q)
        q -= a * y
        alphas.append((rho, a))
    s, y = S[-1], Y[-1]
    q *= float(s @ y) / float(y @ y)
    for (s, y), (rho, a) in zip(zip(S, Y), reversed(alphas)):
        b = rho * float(y @ q)
        q += (a - b) * s
    return -q


def _safe_eval(prog: DiffProgram, theta: np.ndarray) -> Tuple[float, Optional[np.ndarray]]:
    try:
        return value_and_parameter_gradient(prog, theta)
    except NonFiniteLossError as exc:
        logger.debug("Non-finite trial point (%s)", exc.op)
        return float("nan"), None


def lbfgs_minimize(
    prog: DiffProgram,
    theta0,
    cfg: TrainConfig,
    audit: Optional[Callable[[np.ndarray], Tuple[bool, float]]] = None,
) -> Tuple[np.ndarray, TrainReport]:
    """
    Minimize a program with limited-memory BFGS.

    The step length is not fixed at learning_rate throughout: an update from
    an empty memory (the first one, or the first after a reset) is a
    steepest-descent step of length learning_rate * min(1, 1 / |g|_1), and
    every later update starts from the unit quasi-Newton step. A step that
    does not decrease the loss is halved up to MAX_HALVINGS times. An epoch
    is inner_iters_per_epoch updates; training stops when the epochs run
    out or the per-epoch relative loss change drops below rel_loss_tol.

    Args:
        prog: Loss program.
        theta0: Initial parameters.
        cfg: Training settings.
        audit: Optional check of the final field, returning (flag, metric).

    Returns:
        (theta*, report)
    """
    start = time.perf_counter()
    torch.manual_seed(cfg.seed)
    theta = np.asarray(theta0, dtype=np.float64).copy()
    f, g = _safe_eval(prog, theta)
    if g is None or not np.isfinite(f):
        logger.warning("%s: loss is not finite at the initial parameters", prog.name)
        return theta, TrainReport(
            loss_history=[f],
            wall_time=time.perf_counter() - start,
            stop_reason="non_finite",
            diverged=True,
            localization_metric=float("inf"),
        )

    S: deque = deque(maxlen=cfg.history_size)
    Y: deque = deque(maxlen=cfg.history_size)
    loss_history, epoch_losses = [f], [f]
    stop_reason = "max_epochs"
    n_updates = 0

    for epoch in range(1, cfg.max_epochs + 1):
        stalled = False
        for _ in range(cfg.inner_iters_per_epoch):
            if S:
                d = _two_loop(g, S, Y)
                t = 1.0
                if float(g @ d) >= 0:
                    S.clear()
                    Y.clear()
            if not S:
                d = -g
                t = cfg.learning_rate * min(1.0, 1.0 / max(float(np.abs(g).sum()), 1e-300))

            accepted, any_finite = False, False
            for _ in range(MAX_HALVINGS + 1):
                trial = theta + t * d
                f_new, g_new = _safe_eval(prog, trial)
                if g_new is not None and np.isfinite(f_new):
                    any_finite = True
                    if f_new <= f:
                        accepted = True
                        break
                t *= 0.5

            if not accepted:
                if not any_finite:
                    stop_reason = "non_finite"
                    logger.warning("%s: non-finite loss on every trial step, rolling back", prog.name)
                    stalled = True
                    break
                if not S:
                    stalled = True
                    break
                logger.warning("%s: backtracking exhausted, resetting L-BFGS memory", prog.name)
                S.clear()
                Y.clear()
                continue

            s, y = trial - theta, g_new - g
            if float(s @ y) > 1e-10:
                S.append(s)
                Y.append(y)
            theta, f, g = trial, f_new, g_new
            loss_history.append(f)
            n_updates += 1

        prev = epoch_losses[-1]
        epoch_losses.append(f)
        rel = abs(f - prev) / abs(prev) if prev != 0 else abs(f - prev)
        logger.info("%s epoch %d loss %.6e rel_change %.3e", prog.name, epoch, f, rel)
        if stop_reason == "non_finite":
            break
        if stalled or rel < cfg.rel_loss_tol:
            stop_reason = "converged"
            break

    final_U = None
    if prog.field is not None:
        with torch.no_grad():
            final_U = prog.field(as_tensor(theta)).numpy().copy()

    flag, metric = False, 0.0
    if audit is not None and final_U is not None:
        flag, metric = audit(final_U)
    diverged = stop_reason == "non_finite" or flag

    report = TrainReport(
        loss_history=loss_history,
        wall_time=time.perf_counter() - start,
        stop_reason=stop_reason,
        diverged=diverged,
        localization_metric=metric,
        final_U=final_U,
        epoch_losses=epoch_losses,
        n_updates=n_updates,
    )
    logger.info(
        "%s finished: %s after %d updates, loss %.6e, %.2fs",
        prog.name, stop_reason, n_updates, f, report.wall_time,
    )
    return theta, report
