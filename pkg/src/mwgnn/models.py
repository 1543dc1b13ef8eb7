"""MWGNN and baseline models, full-batch training and ablations."""
from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .adaptive import (ChannelEmbeddings, ConvLayerParams, EdgeScores, ScoreNetParams,
                       adaptive_layer, check_channel_weights, edge_logits, fuse_weights,
                       init_channel_embeddings)
from .graph import (GraphBundle, context_mean, context_sequences, local_degree_profile,
                    shortest_path_matrix)
from .metaweight import (AttentionParams, GRUParams, LinearParams, PositionNetParams,
                         attention_integrate, feature_distribution, position_distribution,
                         topo_distribution)

ABLATIONS = ("none", "no_meta", "no_df", "no_dt", "no_dp", "no_channels")
MODEL_KINDS = ("mwgnn", "gcn", "mlp")


@dataclass
class MWGNNConfig:
    k: int = 2
    alpha: float = 0.5
    lambda_1: float = 0.1
    lambda_2: float = 0.1
    beta: float = 0.5
    d_meta: int = 32
    d_hidden: int = 128
    d_q: int = 16
    d_score: int = 32
    num_layers: int = 2
    feature_mode: str = "average"
    ablation: str = "none"
    max_context: int = 64
    spd_truncation: int | None = None

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.num_layers < 1:
            raise ValueError("num_layers must be at least 1")
        if self.k < 0:
            raise ValueError("k must be non-negative")
        for name in ("d_meta", "d_hidden", "d_q", "d_score", "max_context"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        check_channel_weights(self.lambda_1, self.lambda_2, self.beta)
        if self.feature_mode not in ("average", "gru"):
            raise ValueError(f"feature_mode must be 'average' or 'gru', got {self.feature_mode!r}")
        if self.ablation not in ABLATIONS:
            raise ValueError(f"unknown ablation {self.ablation!r}; choose from {ABLATIONS}")

    def resolved(self) -> "MWGNNConfig":
        """The configuration actually run, with ablation overrides applied."""
        if self.ablation == "no_channels":
            return replace(self, lambda_1=0.0, lambda_2=0.0, beta=1.0)
        return self

    @property
    def fields(self):
        drop = {"no_dt": "t", "no_df": "f", "no_dp": "p"}.get(self.ablation)
        return tuple(f for f in ("t", "f", "p") if f != drop)


@dataclass
class TrainConfig:
    lr: float = 1e-2
    weight_decay: float = 5e-4
    max_epochs: int = 200
    patience: int = 30
    seed: int = 0

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be at least 1")
        if self.patience < 1:
            raise ValueError("patience must be at least 1")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")


class PreparedGraph:
    """Structural inputs derived once per bundle and shared across runs."""

    def __init__(self, bundle: GraphBundle):
        self.bundle = bundle
        g = bundle.graph
        self.edge_index = ad.EdgeIndex.from_graph(g)
        self.ldp_raw = local_degree_profile(g)
        mu = self.ldp_raw.mean(axis=0)
        sd = self.ldp_raw.std(axis=0)
        self.ldp = (self.ldp_raw - mu) / np.where(sd > 0, sd, 1.0)
        self.spd = shortest_path_matrix(g)
        self._contexts = {}
        self._means = {}
        self._gcn = None

    def spd_input(self, truncation=None):
        if truncation is None:
            return self.spd
        d = self.spd.copy()
        d[d > truncation] = truncation + 1
        return d

    def contexts(self, k, max_len, field="t"):
        """Sorted contexts for the topology ("t") or feature ("f") recurrence."""
        key = (k, max_len, field)
        if key not in self._contexts:
            rows = self.ldp_raw if field == "t" else self.bundle.features
            self._contexts[key] = context_sequences(self.bundle.graph, k, max_len, spd=self.spd,
                                                    tiebreak=rows)
        return self._contexts[key]

    def context_mean(self, k):
        if k not in self._means:
            self._means[k] = context_mean(self.bundle.graph, self.bundle.features, k, spd=self.spd)
        return self._means[k]

    def gcn_operator(self):
        """Symmetric renormalized adjacency D^-1/2 (A + I) D^-1/2 as an edge layout."""
        if self._gcn is None:
            g = self.bundle.graph
            n = g.num_nodes
            rows = np.concatenate([g.edge_rows, np.arange(n)])
            cols = np.concatenate([g.csr_neighbors, np.arange(n)])
            order = np.lexsort((cols, rows))
            rows, cols = rows[order], cols[order]
            indptr = np.zeros(n + 1, dtype=np.int64)
            np.cumsum(np.bincount(rows, minlength=n), out=indptr[1:])
            reverse = np.lexsort((rows, cols))
            deg = (g.degrees + 1).astype(np.float64)
            w = 1.0 / np.sqrt(deg[rows] * deg[cols])
            self._gcn = (ad.EdgeIndex(indptr, cols, reverse), w)
        return self._gcn


def _prepared(b):
    return b if isinstance(b, PreparedGraph) else PreparedGraph(b)


class MWGNN:
    """Meta-weight encoder, decoupled edge scores and adaptive three-channel layers."""

    kind = "mwgnn"

    def __init__(self, bundle, cfg: MWGNNConfig | None = None, seed: int = 0):
        self.cfg = (cfg or MWGNNConfig()).resolved()
        self.cfg.validate()
        b = bundle.bundle if isinstance(bundle, PreparedGraph) else bundle
        n, f, c = b.num_nodes, b.num_features, b.num_classes
        cfg = self.cfg
        s = self.params = ad.ParamStore(seed)
        dm = cfg.d_meta
        self.gru_t = GRUParams.create(s, "meta.gru_t", 5, dm)
        if cfg.feature_mode == "average":
            self.proj_f = LinearParams.create(s, "meta.proj_f", f, dm)
            self.gru_f = None
        else:
            self.gru_f = GRUParams.create(s, "meta.gru_f", f, dm)
            self.proj_f = None
        self.pos = PositionNetParams.create(s, "meta.pos", n, cfg.d_hidden, dm)
        self.att = AttentionParams.create(s, "meta.att", dm, cfg.d_q)
        dst = dm if cfg.ablation != "no_meta" else None
        self.psi_f = ScoreNetParams.create(s, "psi_f", dst or f, f, cfg.d_score)
        self.psi_t = ScoreNetParams.create(s, "psi_t", dst or 5, 5, cfg.d_score)
        self.fc_f = LinearParams.create(s, "chan.fc_f", f, cfg.d_hidden)
        self.fc_t = LinearParams.create(s, "chan.fc_t", n, cfg.d_hidden)
        self.layers = [
            ConvLayerParams(s.glorot(f"conv{l}.w", cfg.d_hidden, cfg.d_hidden),
                            cfg.lambda_1, cfg.lambda_2, cfg.beta)
            for l in range(cfg.num_layers)
        ]
        self.classifier = LinearParams.create(s, "out", cfg.d_hidden, c)

    def meta_weight(self, pg: PreparedGraph):
        cfg = self.cfg
        g, x = pg.bundle.graph, pg.bundle.features
        fields = cfg.fields
        dists = {}
        if "t" in fields:
            dists["t"] = topo_distribution(g, pg.ldp, cfg.k, self.gru_t,
                                           contexts=pg.contexts(cfg.k, cfg.max_context, "t"))
        if "f" in fields:
            if cfg.feature_mode == "average":
                dists["f"] = feature_distribution(g, x, cfg.k, "average", proj=self.proj_f,
                                                  context_avg=pg.context_mean(cfg.k))
            else:
                dists["f"] = feature_distribution(
                    g, x, cfg.k, "gru", gru=self.gru_f,
                    contexts=pg.contexts(cfg.k, cfg.max_context, "f"))
        if "p" in fields:
            dists["p"] = position_distribution(pg.spd_input(cfg.spd_truncation), self.pos)
        return attention_integrate(dists, self.att, fields)

    def edge_scores(self, pg: PreparedGraph, meta=None) -> EdgeScores:
        ei, x, ldp = pg.edge_index, pg.bundle.features, pg.ldp
        if self.cfg.ablation == "no_meta":
            dst_f, dst_t = x, ldp
        else:
            meta = meta if meta is not None else self.meta_weight(pg)
            dst_f = dst_t = meta.w_meta
        raw_f = edge_logits(ei, dst_f, x, self.psi_f)
        raw_t = edge_logits(ei, dst_t, ldp, self.psi_t)
        scores = EdgeScores(ad.segment_softmax(ei, raw_f), ad.segment_softmax(ei, raw_t))
        return fuse_weights(scores, self.cfg.alpha)

    def channels(self, pg: PreparedGraph) -> ChannelEmbeddings:
        cfg = self.cfg
        x = pg.bundle.features
        if cfg.lambda_2 > 0:
            return init_channel_embeddings(x, pg.edge_index, self.fc_f, self.fc_t)
        return ChannelEmbeddings(ad.tanh(self.fc_f(ad.Tensor(x))), None)

    def forward(self, bundle):
        pg = _prepared(bundle)
        scores = self.edge_scores(pg)
        ch = self.channels(pg)
        h = ch.h_f0
        for l, layer in enumerate(self.layers):
            act = ad.relu if l < len(self.layers) - 1 else ad.identity
            h = adaptive_layer(h, pg.edge_index, scores, ch, layer, activation=act)
        return self.classifier(h)


class GCN:
    """Stacked relu(A_hat H W + b) layers followed by a linear classifier."""

    kind = "gcn"

    def __init__(self, bundle, layers: int = 2, hidden: int = 128, seed: int = 0):
        b = bundle.bundle if isinstance(bundle, PreparedGraph) else bundle
        if layers < 1:
            raise ValueError("layers must be at least 1")
        s = self.params = ad.ParamStore(seed)
        widths = [b.num_features] + [hidden] * layers
        self.layers = [LinearParams.create(s, f"gcn{l}", widths[l], widths[l + 1])
                       for l in range(layers)]
        self.classifier = LinearParams.create(s, "out", hidden, b.num_classes)

    def forward(self, bundle):
        pg = _prepared(bundle)
        ei, w = pg.gcn_operator()
        h = ad.Tensor(pg.bundle.features)
        for layer in self.layers:
            h = ad.relu(ad.edge_aggregate(ei, w, h @ layer.w) + layer.b)
        return self.classifier(h)


class MLP:
    """Graph-agnostic perceptron on node features."""

    kind = "mlp"

    def __init__(self, bundle, layers: int = 2, hidden: int = 128, seed: int = 0):
        b = bundle.bundle if isinstance(bundle, PreparedGraph) else bundle
        if layers < 1:
            raise ValueError("layers must be at least 1")
        s = self.params = ad.ParamStore(seed)
        widths = [b.num_features] + [hidden] * layers
        self.layers = [LinearParams.create(s, f"mlp{l}", widths[l], widths[l + 1])
                       for l in range(layers)]
        self.classifier = LinearParams.create(s, "out", hidden, b.num_classes)

    def forward(self, bundle):
        features = bundle.bundle.features if isinstance(bundle, PreparedGraph) else bundle.features
        h = ad.Tensor(features)
        for layer in self.layers:
            h = ad.relu(layer(h))
        return self.classifier(h)



def build_model(kind: str, bundle, mcfg: MWGNNConfig | None = None, seed: int = 0):
    mcfg = mcfg or MWGNNConfig()
    if kind == "mwgnn":
        return MWGNN(bundle, mcfg, seed)
    if kind == "gcn":
        return GCN(bundle, mcfg.num_layers, mcfg.d_hidden, seed)
    if kind == "mlp":
        return MLP(bundle, mcfg.num_layers, mcfg.d_hidden, seed)
    raise ValueError(f"unknown model kind {kind!r}; choose from {MODEL_KINDS}")


def evaluate(logits, labels, mask) -> float:
    """Accuracy of argmax predictions (ties go to the lowest class) on ``mask``."""
    logits = logits.data if isinstance(logits, ad.Tensor) else np.asarray(logits)
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ValueError("evaluation mask selects no nodes")
    pred = np.argmax(logits[mask], axis=1)
    return float(np.mean(pred == np.asarray(labels)[mask]))


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainReport:
    model: str
    dataset: str
    variant: str
    seed: int
    best_epoch: int
    best_val_acc: float
    test_acc: float
    epochs_run: int
    val_acc_history: list = field(default_factory=list)
    test_acc_history: list = field(default_factory=list)
    loss_history: list = field(default_factory=list)
    epoch_times: list = field(default_factory=list)
    wall_time: float = 0.0
    config: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)

    def deterministic_view(self):
        """Everything except timings."""
        d = self.to_dict()
        d.pop("wall_time")
        d.pop("epoch_times")
        return d


def train(kind: str, bundle, mcfg: MWGNNConfig | None = None, tcfg: TrainConfig | None = None,
          prepared: PreparedGraph | None = None):
    """Full-batch training with Adam and early stopping on validation accuracy.

    Epoch ``e`` records accuracies of the parameters after ``e`` updates, then
    takes the next gradient step. Returns the report and the model restored to
    its best-validation parameters.
    """
    mcfg = mcfg or MWGNNConfig()
    tcfg = tcfg or TrainConfig()
    pg = prepared if prepared is not None else _prepared(bundle)
    b = pg.bundle
    if not b.train_mask.any():
        raise ValueError("training mask is empty")
    if not b.val_mask.any() or not b.test_mask.any():
        raise ValueError("validation and test masks must be nonempty")
    model = build_model(kind, pg, mcfg, tcfg.seed)
    opt = ad.Adam(model.params, lr=tcfg.lr, weight_decay=tcfg.weight_decay)
    report = TrainReport(
        model=kind, dataset=b.name,
        variant=mcfg.ablation if kind == "mwgnn" else "none", seed=tcfg.seed,
        best_epoch=-1, best_val_acc=-1.0, test_acc=float("nan"), epochs_run=0,
        config={"model": asdict(mcfg) if kind == "mwgnn" else
                {"num_layers": mcfg.num_layers, "d_hidden": mcfg.d_hidden},
                "train": asdict(tcfg)},
    )
    best_state = None
    start = time.perf_counter()
    for epoch in range(tcfg.max_epochs):
        t0 = time.perf_counter()
        model.params.zero_grad()
        try:
            logits = model.forward(pg)
            loss = ad.masked_cross_entropy(logits, b.labels, b.train_mask)
        except ad.NonFiniteError as e:
            raise TrainingDiverged(f"non-finite values at epoch {epoch}: {e}") from e
        val = evaluate(logits, b.labels, b.val_mask)
        test = evaluate(logits, b.labels, b.test_mask)
        report.val_acc_history.append(val)
        report.test_acc_history.append(test)
        report.loss_history.append(float(loss.data))
        if val > report.best_val_acc:
            report.best_val_acc, report.best_epoch, report.test_acc = val, epoch, test
            best_state = model.params.state()
        report.epochs_run = epoch + 1
        if epoch - report.best_epoch >= tcfg.patience:
            report.epoch_times.append(time.perf_counter() - t0)
            break
        loss.backward()
        opt.step()
        report.epoch_times.append(time.perf_counter() - t0)
    report.wall_time = time.perf_counter() - start
    model.params.load(best_state)
    return report, model


def run_ablation(bundle, variant: str, tcfg: TrainConfig | None = None, seeds=(0,),
                 mcfg: MWGNNConfig | None = None, prepared: PreparedGraph | None = None):
    """Train the MWGNN variant over several seeds; returns mean, std and reports."""
    if variant not in ABLATIONS:
        raise ValueError(f"unknown ablation variant {variant!r}; choose from {ABLATIONS}")
    tcfg = tcfg or TrainConfig()
    mcfg = replace(mcfg or MWGNNConfig(), ablation=variant)
    pg = prepared if prepared is not None else _prepared(bundle)
    reports = [train("mwgnn", pg.bundle, mcfg, replace(tcfg, seed=s), prepared=pg)[0]
               for s in seeds]
    acc = np.array([r.test_acc for r in reports])
    return {"variant": variant, "mean": float(acc.mean()), "std": float(acc.std()),
            "reports": reports}
