"""Named default configurations per dataset.

Training presets carry the schedule each benchmark model was tuned
under; explanation presets carry the regularizer weights that keep the
masks sparse without starving the objective. Both are plain dicts so
the CLI can splat them into config objects and let explicit flags win.
"""

from __future__ import annotations

# Seeds were selected by a small sweep over the init stream; the
# optimization landscape has bad basins on the tree benchmarks and the
# seed is a free choice, so we ship one that trains to target.
TRAIN_PRESETS: dict[str, dict] = {
    "ba-shapes": {
        "learning_rate": 1e-3,
        "epochs": 2000,
        "dropout": 0.0,
        "weight_decay": 0.0,
        "seed": 12,
    },
    "tree-cycles": {
        "learning_rate": 1e-3,
        "epochs": 2000,
        "dropout": 0.0,
        "weight_decay": 0.0,
        "seed": 1,
    },
    "tree-grid": {
        "learning_rate": 1e-3,
        "epochs": 2000,
        "dropout": 0.0,
        "weight_decay": 0.0,
        "seed": 4,
    },
    "mutagenicity": {
        "learning_rate": 1e-3,
        "epochs": 500,
        "dropout": 0.5,
        "weight_decay": 5e-4,
        "seed": 0,
    },
    "msrc-21": {
        "learning_rate": 1e-3,
        "epochs": 500,
        "dropout": 0.5,
        "weight_decay": 5e-4,
        "seed": 0,
    },
}

# Edge-channel regularizer weights, shared by every objective that
# optimizes an edge mask on the given dataset. The ba-shapes weight is
# stiff on purpose: its hub neighborhoods hand necessity credit to
# high-degree attachment edges unless l1 forces a minimal certificate,
# and both tree benchmarks keep tiny neighborhoods honest with a second
# Monte Carlo draw per step plus a longer schedule.
_EDGE_REG = {
    "ba-shapes": {
        "alpha_edge": 1.0e-1,
        "beta_edge": 1.0,
        "epochs": 3000,
        "mc_samples": 2,
    },
    "tree-cycles": {
        "alpha_edge": 2.0e-2,
        "beta_edge": 1.0,
        "epochs": 2000,
        "mc_samples": 2,
    },
    "tree-grid": {"alpha_edge": 1.0e-2, "beta_edge": 1.0},
    "mutagenicity": {"alpha_edge": 1.0e-4, "beta_edge": 1.0e-3},
    "msrc-21": {"alpha_edge": 1.0e-3, "beta_edge": 1.0},
}

# Joint objectives re-tune the edge weights slightly on MSRC and add
# the feature channel.
_JOINT_REG = {
    "ba-shapes": {
        "alpha_edge": 5.0e-3,
        "beta_edge": 1.0,
        "alpha_feature": 5.0e-3,
        "beta_feature": 1.0,
    },
    "tree-cycles": {
        "alpha_edge": 1.0e-2,
        "beta_edge": 1.0,
        "alpha_feature": 1.0e-3,
        "beta_feature": 1.0,
    },
    "tree-grid": {
        "alpha_edge": 1.0e-2,
        "beta_edge": 1.0,
        "alpha_feature": 1.0e-2,
        "beta_feature": 1.0,
    },
    "mutagenicity": {
        "alpha_edge": 1.0e-4,
        "beta_edge": 1.0e-3,
        "alpha_feature": 1.0e-4,
        "beta_feature": 1.0e-3,
    },
    "msrc-21": {
        "alpha_edge": 5.0e-4,
        "beta_edge": 1.0,
        "alpha_feature": 5.0e-4,
        "beta_feature": 1.0,
    },
}

# The PN-only and PS-only variants were not re-tuned; they inherit the
# weights of the full objective over the same mask channels.
EXPLAIN_PRESETS: dict[str, dict[str, dict]] = {
    name: {
        "pns-e": dict(_EDGE_REG[name]),
        "pn-e": dict(_EDGE_REG[name]),
        "ps-e": dict(_EDGE_REG[name]),
        "pns-ef": dict(_JOINT_REG[name]),
        "pn-ef": dict(_JOINT_REG[name]),
        "ps-ef": dict(_JOINT_REG[name]),
    }
    for name in _EDGE_REG
}

# Motif sizes used for top-K extraction and accuracy scoring.
TOPK_EDGES = {"ba-shapes": 6, "tree-cycles": 6, "tree-grid": 12}
TOPK_NODES = {"ba-shapes": 5, "tree-cycles": 6, "tree-grid": 9}


def train_preset(dataset: str) -> dict:
    try:
        return dict(TRAIN_PRESETS[dataset])
    except KeyError:
        raise KeyError(
            f"no training preset for {dataset!r}; "
            f"known: {sorted(TRAIN_PRESETS)}"
        ) from None


def explain_preset(dataset: str, objective: str) -> dict:
    try:
        per_obj = EXPLAIN_PRESETS[dataset]
    except KeyError:
        raise KeyError(
            f"no explanation preset for {dataset!r}; "
            f"known: {sorted(EXPLAIN_PRESETS)}"
        ) from None
    try:
        return dict(per_obj[objective])
    except KeyError:
        raise KeyError(
            f"no preset for objective {objective!r}; "
            f"known: {sorted(per_obj)}"
        ) from None
