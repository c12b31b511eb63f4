"""Built-in data generators used by the benchmarks and tests.

* Gaussian blob generators (balanced and imbalanced) for synthetic sweeps.
* The complete tic-tac-toe endgame corpus (the classic UCI benchmark is
  exactly the set of terminal boards with x moving first), synthesized by
  game-tree enumeration so no download is needed.
"""

from __future__ import annotations

import numpy as np

_WIN_LINES = (
    (0, 1, 2),
    (3, 4, 5),
    (6, 7, 8),
    (0, 3, 6),
    (1, 4, 7),
    (2, 5, 8),
    (0, 4, 8),
    (2, 4, 6),
)


def gaussian_blobs(
    n_per_class: list[int],
    p: int,
    seed: int = 0,
    spread: float = 1.0,
    center_scale: float = 3.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Isotropic Gaussian classes with random centers; returns (p, n) and labels."""
    rng = np.random.default_rng(seed)
    cols, labels = [], []
    for k, m in enumerate(n_per_class, start=1):
        center = rng.normal(scale=center_scale, size=p)
        cols.append(center[:, None] + spread * rng.normal(size=(p, m)))
        labels.extend([k] * m)
    return np.hstack(cols), np.asarray(labels, dtype=np.int64)


def imbalanced_gaussians(
    n_minority: int,
    imbalance_ratio: float,
    p: int = 2,
    seed: int = 0,
    separation: float = 2.0,
    minority_spread: float = 1.0,
    majority_spread: float = 1.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Two overlapping Gaussian classes, the majority ``imbalance_ratio`` times larger.

    Label 1 is the minority (positive) class.
    """
    rng = np.random.default_rng(seed)
    n_major = int(round(n_minority * imbalance_ratio))
    minority = minority_spread * rng.normal(size=(p, n_minority))
    minority[0] += separation
    majority = majority_spread * rng.normal(size=(p, n_major))
    X = np.hstack([minority, majority])
    y = np.concatenate([np.ones(n_minority), np.full(n_major, 2)]).astype(np.int64)
    return X, y


def _winner(board: list[int]) -> int:
    for a, b, c in _WIN_LINES:
        if board[a] != 0 and board[a] == board[b] == board[c]:
            return board[a]
    return 0


def tictactoe_endgames() -> tuple[np.ndarray, np.ndarray]:
    """All 958 terminal tic-tac-toe boards (x first): features (9, 958), labels.

    Cells are encoded x=1, o=-1, blank=0. Label 1 = "x wins" (626 boards),
    label 2 otherwise. Board order is deterministic (sorted tuples).
    """
    terminal: set[tuple[int, ...]] = set()

    def play(board: list[int], turn: int) -> None:
        if _winner(board) != 0 or 0 not in board:
            terminal.add(tuple(board))
            return
        for i in range(9):
            if board[i] == 0:
                board[i] = turn
                play(board, -turn)
                board[i] = 0

    play([0] * 9, 1)
    boards = sorted(terminal)
    X = np.asarray(boards, dtype=np.float64).T
    y = np.asarray(
        [1 if _winner(list(b)) == 1 else 2 for b in boards], dtype=np.int64
    )
    return X, y
