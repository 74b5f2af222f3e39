"""Necessity/sufficiency mask optimization over GCN inputs.

The explainer relaxes the discrete choice of an explanatory subgraph to
continuous edge and node masks and scores a candidate by a lower bound
on the probability that the kept part is both necessary and sufficient
for the model's prediction:

    inner = P(Y != yhat | complement kept) + P(Y = yhat | explanation kept) - 1

with the reported bound clamped at 0. The complement side is estimated
by sampling keep-factors around 1 - M with uniform jitter, which keeps
the counterfactual expectation differentiable in the mask; the factual
side is a single forward pass on the masked inputs. An adaptive-moment
loop ascends the bound minus sparsity/entropy regularizers, and the
final masks are discretized by top-K or threshold extraction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .graphs import Instance
from .masks import MaskPair, apply_masks, entropy_grad, entropy_sum, l1_norm
from .model import GcnParams, backward_inputs, fold_arc_to_edges, forward
from .optim import Adam

OBJECTIVES = ("pns-e", "pns-ef", "pn-e", "pn-ef", "ps-e", "ps-ef")

# Default mask-loop lengths, chosen where the loss curves flatten.
EPOCHS_GRAPH_TASK = 500
EPOCHS_NODE_TASK = 1000


class ExplainDiverged(RuntimeError):
    """Mask optimization produced a non-finite loss."""


@dataclass
class ExplainConfig:
    """Knobs for one explanation run.

    objective selects which bound is ascended and whether a node mask is
    optimized alongside the edge mask ("-ef") or pinned at identity
    ("-e"). Regularizer weights follow the overall loss
    L = -objective + alpha_e*|M_e| + beta_e*Ent(M_e) (+ feature terms),
    where Ent is the mean elementwise binary entropy of the mask.
    """

    objective: str = "pns-e"
    alpha_edge: float = 0.0
    beta_edge: float = 0.0
    alpha_feature: float = 0.0
    beta_feature: float = 0.0
    epochs: int | None = None
    step_size: float = 0.01
    mc_samples: int = 1
    sigma_edge: float = 0.5
    sigma_feature: float = 0.5
    priors: tuple = (1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0)
    extract_mode: str = "threshold"
    k_edges: int | None = None
    k_nodes: int | None = None
    threshold: float = 0.5
    seed: int = 0

    @property
    def joint(self) -> bool:
        """Whether the node-feature channel participates in the objective."""
        return self.objective.endswith("-ef")

    def resolved_epochs(self, instance: Instance) -> int:
        if self.epochs is not None:
            return int(self.epochs)
        return EPOCHS_GRAPH_TASK if instance.task == "graph" else EPOCHS_NODE_TASK

    def validate(self):
        if self.objective not in OBJECTIVES:
            raise ValueError(
                f"unknown objective {self.objective!r}; expected one of {OBJECTIVES}"
            )
        for name in ("alpha_edge", "beta_edge", "alpha_feature", "beta_feature"):
            w = float(getattr(self, name))
            if not np.isfinite(w) or w < 0.0:
                raise ValueError(f"{name} must be finite and >= 0, got {w}")
        if self.epochs is not None and int(self.epochs) < 0:
            raise ValueError("epochs must be >= 0")
        if not self.step_size > 0.0:
            raise ValueError("step_size must be positive")
        if int(self.mc_samples) < 1:
            raise ValueError("mc_samples must be >= 1")
        if self.sigma_edge < 0.0 or self.sigma_feature < 0.0:
            raise ValueError("sigma must be >= 0")
        p = np.asarray(self.priors, dtype=np.float64)
        if p.shape != (3,) or np.any(p < 0.0) or abs(float(p.sum()) - 1.0) > 1e-9:
            raise ValueError("priors must be three nonnegative values summing to 1")
        if self.extract_mode not in ("top-k", "threshold"):
            raise ValueError(f"unknown extract_mode {self.extract_mode!r}")
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError("threshold must lie in [0, 1]")
        if self.extract_mode == "top-k" and self.k_edges is None:
            raise ValueError("top-k extraction needs k_edges")
        for name in ("k_edges", "k_nodes"):
            k = getattr(self, name)
            if k is not None and int(k) < 1:
                raise ValueError(f"{name} must be >= 1")
        return self


@dataclass
class DiffValue:
    """A scalar together with its gradients in mask-value space."""

    value: float
    d_edge: np.ndarray
    d_node: np.ndarray


@dataclass
class LossValue:
    """Overall loss plus the objective it wraps, with value-space gradients."""

    value: float
    objective: float
    d_edge: np.ndarray
    d_node: np.ndarray


@dataclass
class ComplementSample:
    """One draw of counterfactually perturbed inputs.

    Channels with an epsilon draw carry keep-factors clamp(1-M+eps, 0, 1);
    channels without one stay at the factual masked value. sensitivity
    arrays hold d factor / d mask entry (-1 on unclamped complement
    entries, 0 where the clamp is active, +1 on factual channels), which
    is all the chain rule needs.
    """

    edge_weights: np.ndarray
    features: np.ndarray
    edge_factor: np.ndarray
    node_factor: np.ndarray
    edge_sensitivity: np.ndarray
    node_sensitivity: np.ndarray


@dataclass
class EpsDraws:
    """Frozen jitter for every Monte-Carlo forward of one loss evaluation.

    Keyed by sub-event: `both` perturbs the two channels jointly, `edges`
    and `features` perturb one channel with the other left factual.
    Edge-only objectives populate `edges` alone.
    """

    both: list = field(default_factory=list)
    edges: list = field(default_factory=list)
    features: list = field(default_factory=list)


def _complement_factor(mask_values, eps):
    raw = 1.0 - mask_values + eps
    factor = np.clip(raw, 0.0, 1.0)
    sensitivity = np.where((raw > 0.0) & (raw < 1.0), -1.0, 0.0)
    return factor, sensitivity


def _complement_from_eps(instance, masks, eps_edge=None, eps_feature=None):
    """Build a ComplementSample; a channel is perturbed iff its eps is given."""
    if eps_edge is not None:
        ef, es = _complement_factor(masks.edge_values, eps_edge)
    else:
        ef = masks.edge_values
        es = np.ones_like(ef)
    if eps_feature is not None:
        nf, ns = _complement_factor(masks.node_values, eps_feature)
    else:
        nf = masks.node_values
        ns = np.ones_like(nf)
    return ComplementSample(
        edge_weights=instance.graph.edge_weights * ef,
        features=instance.features * nf[:, None],
        edge_factor=ef,
        node_factor=nf,
        edge_sensitivity=es,
        node_sensitivity=ns,
    )


def sample_complement(instance, masks, which, rng, sigma_edge=0.5, sigma_feature=None):
    """Draw one counterfactual input around the mask complement.

    which selects the perturbed channel(s): "edges", "features", or
    "both"; the non-selected channel stays at its factual masked value.
    Each perturbed entry gets an independent uniform eps on
    [-sigma, sigma] before clamping.
    """
    if which not in ("edges", "features", "both"):
        raise ValueError(f"unknown channel selector {which!r}")
    if sigma_feature is None:
        sigma_feature = sigma_edge
    if sigma_edge < 0.0 or sigma_feature < 0.0:
        raise ValueError("sigma must be >= 0")
    eps_e = eps_f = None
    if which in ("edges", "both"):
        eps_e = rng.uniform(-sigma_edge, sigma_edge, size=instance.num_edges)
    if which in ("features", "both"):
        eps_f = rng.uniform(-sigma_feature, sigma_feature, size=instance.num_nodes)
    return _complement_from_eps(instance, masks, eps_e, eps_f)


def draw_eps(instance, cfg: ExplainConfig, rng) -> EpsDraws:
    """Fresh jitter for one loss evaluation, cfg.mc_samples per sub-event.

    Sufficiency-only objectives never touch the complement side, so
    their loss path draws nothing; pn_term and pns_lower_bound draw the
    full structure regardless of the configured objective.
    """
    if cfg.objective.startswith("ps"):
        return EpsDraws()
    return _draw_pn_eps(instance, cfg, rng)


def _draw_pn_eps(instance, cfg: ExplainConfig, rng) -> EpsDraws:
    draws = EpsDraws()
    m, n = instance.num_edges, instance.num_nodes
    se, sf = cfg.sigma_edge, cfg.sigma_feature
    for _ in range(cfg.mc_samples):
        if cfg.joint:
            draws.both.append(
                (rng.uniform(-se, se, size=m), rng.uniform(-sf, sf, size=n))
            )
            draws.edges.append(rng.uniform(-se, se, size=m))
            draws.features.append(rng.uniform(-sf, sf, size=n))
        else:
            draws.edges.append(rng.uniform(-se, se, size=m))
    return draws


def zero_eps(instance, cfg: ExplainConfig) -> EpsDraws:
    """Deterministic (eps = 0) draw structure for reporting and checks."""
    draws = EpsDraws()
    ze = np.zeros(instance.num_edges)
    zn = np.zeros(instance.num_nodes)
    if cfg.joint:
        draws.both.append((ze, zn))
        draws.edges.append(ze)
        draws.features.append(zn)
    else:
        draws.edges.append(ze)
    return draws


def _eval_sample(model, instance, sample: ComplementSample):
    """yhat-probability of one perturbed forward, with mask-value gradients."""
    graph = instance.graph
    _, _, eid, _ = graph.arc_view()
    probs, tape = forward(
        model,
        graph,
        sample.edge_weights[eid],
        sample.features,
        instance.task,
        target_node=instance.target_node,
    )
    yhat = instance.predicted_label
    d_probs = np.zeros_like(probs)
    d_probs[yhat] = 1.0
    d_arc, d_x = backward_inputs(tape, model, d_probs)
    # chain through weight = base * factor and row scaling X * factor
    d_edge = fold_arc_to_edges(graph, d_arc) * graph.edge_weights * sample.edge_sensitivity
    d_node = (d_x * instance.features).sum(axis=1) * sample.node_sensitivity
    return float(probs[yhat]), d_edge, d_node


def ps_term(model, instance, masks) -> DiffValue:
    """P(Y = yhat | explanation kept): one forward on the masked inputs."""
    arc_w, feats = apply_masks(instance, masks)
    probs, tape = forward(
        model, instance.graph, arc_w, feats, instance.task,
        target_node=instance.target_node,
    )
    yhat = instance.predicted_label
    d_probs = np.zeros_like(probs)
    d_probs[yhat] = 1.0
    d_arc, d_x = backward_inputs(tape, model, d_probs)
    d_edge = fold_arc_to_edges(instance.graph, d_arc) * instance.graph.edge_weights
    d_node = (d_x * instance.features).sum(axis=1)
    return DiffValue(float(probs[yhat]), d_edge, d_node)


def _pn_from_draws(model, instance, masks, cfg: ExplainConfig, draws: EpsDraws) -> DiffValue:
    value = 1.0
    d_edge = np.zeros(instance.num_edges)
    d_node = np.zeros(instance.num_nodes)
    if cfg.joint:
        groups = (
            (cfg.priors[0], [(_e, _f) for (_e, _f) in draws.both]),
            (cfg.priors[1], [(e, None) for e in draws.edges]),
            (cfg.priors[2], [(None, f) for f in draws.features]),
        )
    else:
        groups = ((1.0, [(e, None) for e in draws.edges]),)
    for prior, eps_pairs in groups:
        if not eps_pairs:
            raise ValueError("pn_term needs at least one eps draw per sub-event")
        coeff = float(prior) / len(eps_pairs)
        for eps_e, eps_f in eps_pairs:
            sample = _complement_from_eps(instance, masks, eps_e, eps_f)
            v, de, dn = _eval_sample(model, instance, sample)
            value -= coeff * v
            d_edge -= coeff * de
            d_node -= coeff * dn
    return DiffValue(value, d_edge, d_node)


def pn_term(model, instance, masks, cfg: ExplainConfig, rng) -> DiffValue:
    """P(Y != yhat | explanation removed), a Monte-Carlo mixture estimate.

    Joint objectives mix three sub-events (both channels perturbed, edges
    only, features only) under cfg.priors; edge-only objectives
    degenerate to a single expectation over perturbed edges with the
    features left factual.
    """
    return _pn_from_draws(model, instance, masks, cfg, _draw_pn_eps(instance, cfg, rng))


def _pns_from_draws(model, instance, masks, cfg, draws) -> DiffValue:
    pn = _pn_from_draws(model, instance, masks, cfg, draws)
    ps = ps_term(model, instance, masks)
    return DiffValue(
        pn.value + ps.value - 1.0,
        pn.d_edge + ps.d_edge,
        pn.d_node + ps.d_node,
    )


def pns_lower_bound(model, instance, masks, cfg: ExplainConfig, rng) -> DiffValue:
    """Inner bound value pn + ps - 1, unclamped.

    The optimizer ascends this raw value (the max-with-zero clamp has no
    gradient below 0 and would stall fresh initializations); reports
    clamp at 0.
    """
    return _pns_from_draws(model, instance, masks, cfg, _draw_pn_eps(instance, cfg, rng))


def _objective_from_draws(model, instance, masks, cfg, draws) -> DiffValue:
    kind = cfg.objective.split("-")[0]
    if kind == "pns":
        return _pns_from_draws(model, instance, masks, cfg, draws)
    if kind == "pn":
        return _pn_from_draws(model, instance, masks, cfg, draws)
    return ps_term(model, instance, masks)


def overall_loss_with_draws(model, instance, masks, cfg: ExplainConfig, draws) -> LossValue:
    """Loss under frozen jitter; the deterministic core of overall_loss."""
    obj = _objective_from_draws(model, instance, masks, cfg, draws)
    value = -obj.value
    d_edge = -obj.d_edge
    d_node = -obj.d_node
    # Entropy is averaged over mask entries so one beta transfers across
    # instance sizes; summed entropy grows with the subgraph and drowns
    # the objective (|obj| <= 1) on anything but tiny inputs.
    m = masks.edge_values.size
    value += cfg.alpha_edge * l1_norm(masks.edge_values)
    value += cfg.beta_edge * entropy_sum(masks.edge_values) / m
    d_edge += cfg.alpha_edge + cfg.beta_edge * entropy_grad(masks.edge_values) / m
    if cfg.joint:
        n = masks.node_values.size
        value += cfg.alpha_feature * l1_norm(masks.node_values)
        value += cfg.beta_feature * entropy_sum(masks.node_values) / n
        d_node += cfg.alpha_feature + cfg.beta_feature * entropy_grad(masks.node_values) / n
    return LossValue(value, obj.value, d_edge, d_node)


def overall_loss(model, instance, masks, cfg: ExplainConfig, rng) -> LossValue:
    """-objective plus sparsity (l1) and discreteness (entropy) penalties.

    Feature-channel penalties apply only to joint objectives; edge-only
    runs carry a pinned all-ones node mask that is not a free variable.
    """
    return overall_loss_with_draws(
        model, instance, masks, cfg, draw_eps(instance, cfg, rng)
    )


def rank_top_k(values, k: int) -> np.ndarray:
    """Indices of the k largest entries, ties broken toward lower index."""
    values = np.asarray(values, dtype=np.float64)
    order = np.lexsort((np.arange(values.size), -values))
    return np.sort(order[:k])


def extract_explanation(masks: MaskPair, mode="threshold", k_edges=None, k_nodes=None,
                        threshold=0.5):
    """Discretize masks into an (edge ids, node ids) pair.

    top-k keeps the k highest-weight entries per channel (ties toward
    lower id); threshold keeps entries strictly above t. A pinned node
    mask in top-k mode without k_nodes selects every node, matching the
    all-ones mask's behavior under any threshold below 1.
    """
    if mode == "threshold":
        if not 0.0 <= threshold <= 1.0:
            raise ValueError("threshold must lie in [0, 1]")
        edges = np.flatnonzero(masks.edge_values > threshold)
        nodes = np.flatnonzero(masks.node_values > threshold)
        return edges, nodes
    if mode != "top-k":
        raise ValueError(f"unknown extraction mode {mode!r}")
    m = masks.edge_values.size
    if k_edges is None or not 1 <= int(k_edges) <= m:
        raise ValueError(f"k_edges must lie in [1, {m}], got {k_edges}")
    edges = rank_top_k(masks.edge_values, int(k_edges))
    n = masks.node_values.size
    if masks.optimizes_nodes and k_nodes is not None:
        if not 1 <= int(k_nodes) <= n:
            raise ValueError(f"k_nodes must lie in [1, {n}], got {k_nodes}")
        nodes = rank_top_k(masks.node_values, int(k_nodes))
    else:
        nodes = np.arange(n)
    return edges, nodes


@dataclass
class Explanation:
    """Result of one mask-optimization run on one instance."""

    instance: Instance
    objective: str
    masks: MaskPair
    edges: np.ndarray
    nodes: np.ndarray
    pns_lb: float
    pn_lb: float
    ps_lb: float
    pns_inner: float
    obj_initial: float
    obj_final: float
    loss_trajectory: list
    objective_trajectory: list
    seed: int


def _deterministic_bounds(model, instance, masks, cfg):
    """pn/ps/inner at eps = 0: the reported (noise-free) bound values."""
    ps = ps_term(model, instance, masks)
    pn = _pn_from_draws(model, instance, masks, cfg, zero_eps(instance, cfg))
    inner = pn.value + ps.value - 1.0
    return pn.value, ps.value, inner


def explain(model: GcnParams, instance: Instance, cfg: ExplainConfig) -> Explanation:
    """Optimize masks for one instance and extract the explanation.

    Runs cfg epochs of adaptive-moment ascent on the unconstrained mask
    parameters with fresh jitter each step. Seed-deterministic; raises
    ExplainDiverged on a non-finite loss. The reported bound values are
    recomputed at eps = 0 so they do not inherit sampling noise.
    """
    cfg.validate()
    if instance.predicted_label is None:
        raise ValueError("instance has no predicted label")
    rng = np.random.default_rng(cfg.seed)
    masks = MaskPair.random_init(instance, rng, with_node_mask=cfg.joint)
    epochs = cfg.resolved_epochs(instance)

    kind = cfg.objective.split("-")[0]
    pn0, ps0, inner0 = _deterministic_bounds(model, instance, masks, cfg)
    obj_initial = {"pns": inner0, "pn": pn0, "ps": ps0}[kind]

    params = [masks.edge_params]
    if cfg.joint:
        params.append(masks.node_params)
    adam = Adam([p.shape for p in params], lr=cfg.step_size)

    loss_traj, obj_traj = [], []
    for epoch in range(epochs):
        draws = draw_eps(instance, cfg, rng)
        loss = overall_loss_with_draws(model, instance, masks, cfg, draws)
        if not np.isfinite(loss.value):
            raise ExplainDiverged(
                f"non-finite loss {loss.value} at epoch {epoch} "
                f"(objective {cfg.objective}, seed {cfg.seed})"
            )
        loss_traj.append(loss.value)
        obj_traj.append(loss.objective)
        d_edge_p, d_node_p = masks.chain_to_params(loss.d_edge, loss.d_node)
        grads = [d_edge_p] if d_node_p is None else [d_edge_p, d_node_p]
        adam.step(params, grads)
        masks.refresh()

    pn_f, ps_f, inner_f = _deterministic_bounds(model, instance, masks, cfg)
    obj_final = {"pns": inner_f, "pn": pn_f, "ps": ps_f}[kind]
    edges, nodes = extract_explanation(
        masks, cfg.extract_mode, cfg.k_edges, cfg.k_nodes, cfg.threshold
    )
    return Explanation(
        instance=instance,
        objective=cfg.objective,
        masks=masks,
        edges=edges,
        nodes=nodes,
        pns_lb=max(0.0, inner_f),
        pn_lb=pn_f,
        ps_lb=ps_f,
        pns_inner=inner_f,
        obj_initial=obj_initial,
        obj_final=obj_final,
        loss_trajectory=loss_traj,
        objective_trajectory=obj_traj,
        seed=cfg.seed,
    )


def export_explanation_json(explanation: Explanation, path=None, instance_id=None,
                            node_ids=None, center=None):
    """Serialize one explanation, mapping node ids back to the parent graph.

    node_ids maps local node index -> original id (identity when the
    explained instance is not a carved-out neighborhood). The payload
    carries the full local edge list alongside the masks so a scorer can
    reconstruct the alignment without the original dataset.
    """
    inst = explanation.instance
    if node_ids is None:
        node_ids = np.arange(inst.num_nodes)
    node_ids = np.asarray(node_ids, dtype=np.int64)
    edges = inst.graph.edges
    payload = {
        "instance_id": instance_id,
        "objective": explanation.objective,
        "task": inst.task,
        "edge_mask": explanation.masks.edge_values.tolist(),
        "node_mask": explanation.masks.node_values.tolist(),
        "optimizes_nodes": explanation.masks.optimizes_nodes,
        "extracted_edges": [
            [int(node_ids[u]), int(node_ids[v])] for u, v in edges[explanation.edges]
        ],
        "extracted_nodes": [int(node_ids[v]) for v in explanation.nodes],
        "pns_lb": explanation.pns_lb,
        "pn_lb": explanation.pn_lb,
        "ps_lb": explanation.ps_lb,
        "edges": [[int(node_ids[u]), int(node_ids[v])] for u, v in edges],
        "nodes": [int(i) for i in node_ids],
        "center": None if center is None else int(center),
        "seed": explanation.seed,
    }
    if path is not None:
        with open(path, "w") as fh:
            json.dump(payload, fh)
    return payload


def load_explanation_json(path) -> dict:
    """Read an exported explanation back into plain arrays."""
    with open(path) as fh:
        payload = json.load(fh)
    for key in ("instance_id", "objective", "edge_mask", "node_mask"):
        if key not in payload:
            raise ValueError(f"explanation file {path} is missing {key!r}")
    payload["edge_mask"] = np.asarray(payload["edge_mask"], dtype=np.float64)
    payload["node_mask"] = np.asarray(payload["node_mask"], dtype=np.float64)
    return payload


def _render_dot(num_nodes, labels, edges, edge_mask, picked_nodes, picked_edges,
                center):
    lines = ["graph explanation {", "  node [shape=circle fontsize=10];"]
    for v in range(num_nodes):
        attrs = [f'label="{int(labels[v])}"']
        if v in picked_nodes:
            attrs.append('style=filled fillcolor="#fdb863"')
        if center is not None and int(labels[v]) == int(center):
            attrs.append("shape=doublecircle")
        lines.append(f"  n{v} [{' '.join(attrs)}];")
    for e, (u, v) in enumerate(edges):
        if e in picked_edges:
            style = f'color="#b2182b" penwidth=2.5 label="{edge_mask[e]:.2f}"'
        else:
            style = 'color="#bbbbbb"'
        lines.append(f"  n{int(u)} -- n{int(v)} [{style}];")
    lines.append("}")
    return "\n".join(lines) + "\n"


def export_dot(explanation: Explanation, path=None, node_ids=None, center=None) -> str:
    """Render the instance as Graphviz DOT with the extraction highlighted."""
    inst = explanation.instance
    if node_ids is None:
        node_ids = np.arange(inst.num_nodes)
    text = _render_dot(
        inst.num_nodes, node_ids, inst.graph.edges,
        explanation.masks.edge_values,
        set(int(v) for v in explanation.nodes),
        set(int(e) for e in explanation.edges),
        center,
    )
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text


def dot_from_payload(payload: dict, path=None) -> str:
    """DOT text from an exported explanation payload (no live run needed)."""
    nodes = [int(v) for v in payload["nodes"]]
    local = {orig: i for i, orig in enumerate(nodes)}
    edges = [(local[int(u)], local[int(v)]) for u, v in payload["edges"]]
    picked_edges = set()
    extracted = set((int(u), int(v)) for u, v in payload["extracted_edges"])
    for e, (u, v) in enumerate(payload["edges"]):
        if (int(u), int(v)) in extracted or (int(v), int(u)) in extracted:
            picked_edges.add(e)
    picked_nodes = set(local[int(v)] for v in payload["extracted_nodes"])
    text = _render_dot(
        len(nodes), nodes, edges,
        np.asarray(payload["edge_mask"], dtype=np.float64),
        picked_nodes, picked_edges, payload.get("center"),
    )
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text
