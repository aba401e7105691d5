import io
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .Config import AblationSettings, HyperParams, TrainSettings, VARIANTS
from .Encoder import EncodedNodes, EncoderParams, GraphEncoder
from .Identifier import IdentifierParams, LatentPreferenceIdentifier, sample_group
from .Interactions import BipartiteGraph, sample_negative_batch
from .Matching import MatchingParams, PreferenceMatcher, matching_loss
from .Objectives import (
    CrossDomainState, DomainState, GroupState, LossBreakdown, ProjectionParams,
    domain_vib_loss, init_projection, project_items, reconstruction_loss,
    exact_reconstruction_loss, stack_items, total_loss, user_vib_loss,
)
from .RandomStreams import RandomStreams
from .Splits import EvalSet
from .Tensor import Tensor, take_rows


DOMAINS = ("source", "target")

# Loss components trained by each ablation variant; the rest are reported as 0.
VARIANT_COMPONENTS = {
    "A": ("user_source", "user_target"),
    "B": ("user_source", "user_target"),
    "C": ("matching",),
    "D": ("matching", "user_source", "user_target"),
    "full": ("matching", "domain", "user_source", "user_target"),
}


@dataclass
class DomainParams:
    encoder: EncoderParams
    identifier: IdentifierParams


class DPMCDRModel:
    """
    Per-domain graph encoders and latent preference identifiers, a shared preference
    matcher, and the shared level-2 item projection.

    :param logger: logging.Logger instance for logging messages.
    :param hyper: Model hyperparameters; ``hyper.seed`` seeds initialization.
    :param source: Source-domain training graph.
    :param target: Target-domain training graph.
    :param ablation: Variant and identifier/encoder switches.
    :param train: Reconstruction switches (exact double sum, cross-block negatives).
    """

    def __init__(self, logger: logging.Logger, hyper: HyperParams, source: BipartiteGraph, target: BipartiteGraph,
                 ablation: AblationSettings | None = None, train: TrainSettings | None = None):
        ablation = ablation or AblationSettings()
        train = train or TrainSettings()
        if ablation.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got '{ablation.variant}'")
        hyper.validate()
        self.logger = logger
        self.hyper = hyper
        self.ablation = ablation
        self.variant = ablation.variant
        self.exact_reconstruction = bool(train.exact_reconstruction)
        self.cross_block_negatives = bool(train.cross_block_negatives)
        self.graphs = {"source": source, "target": target}

        self.encoders = {
            domain: GraphEncoder(logger, graph.n_users, graph.n_items, hyper.dim, hyper.layers,
                                 dropout=hyper.dropout, reaggregate_per_layer=ablation.reaggregate_per_layer)
            for domain, graph in self.graphs.items()
        }
        self.identifier = LatentPreferenceIdentifier(
            logger, hyper.width, hyper.dim, sigma1_scale=ablation.sigma1_scale,
            sigma1_activation=ablation.sigma1_activation, learned_prior=ablation.learned_prior,
            mean2_activation=ablation.mean_activation,
        )
        self.matcher = PreferenceMatcher(logger, hyper.width, hyper.dim, hyper.heads, hyper.dropout,
                                         mean_activation=ablation.mean_activation)

        rng = RandomStreams(0 if hyper.seed is None else hyper.seed).get("init")
        self.domain_params = {
            domain: DomainParams(
                self.encoders[domain].init_params(rng, f"{domain}.encoder."),
                self.identifier.init_params(rng, f"{domain}.identifier."),
            )
            for domain in DOMAINS
        }
        self.matching_params: MatchingParams = self.matcher.init_params(rng, "matching.")
        self.projection: ProjectionParams = init_projection(rng, hyper.width, hyper.dim, "projection.")
        self.logger.info(
            f"[Model] variant={self.variant} K={hyper.layers} d={hyper.dim} N={hyper.group_size} "
            f"beta={hyper.beta}, {sum(p.values.size for p in self.parameters())} parameters"
        )

    @property
    def uses_groups(self) -> bool:
        return self.variant in ("C", "D", "full")

    def named_parameters(self) -> dict[str, Tensor]:
        named = {}
        for domain in DOMAINS:
            params = self.domain_params[domain]
            named.update({f"{domain}.encoder.{k}": v for k, v in params.encoder.named().items()})
            named.update({f"{domain}.identifier.{k}": v for k, v in params.identifier.named().items()})
        named.update({f"matching.{k}": v for k, v in self.matching_params.named().items()})
        named.update({f"projection.{k}": v for k, v in self.projection.named().items()})
        return named

    def parameters(self) -> list[Tensor]:
        return list(self.named_parameters().values())

    def matching_parameter_names(self) -> list[str]:
        return [name for name in self.named_parameters() if name.startswith("matching.")]

    def snapshot(self) -> dict[str, np.ndarray]:
        return {name: p.values.copy() for name, p in self.named_parameters().items()}

    def restore(self, values: dict[str, np.ndarray]):
        for name, p in self.named_parameters().items():
            if name not in values:
                raise KeyError(f"missing parameter '{name}'")
            if values[name].shape != p.shape:
                raise ValueError(f"parameter '{name}' has shape {values[name].shape}, expected {p.shape}")
            p.values[...] = values[name]

    def check_group_size(self):
        if not self.uses_groups:
            return
        for domain, graph in self.graphs.items():
            if self.hyper.group_size > graph.n_users:
                raise ValueError(
                    f"group size N={self.hyper.group_size} exceeds the {graph.n_users} training users "
                    f"of the {domain} domain; lower model.group_size"
                )

    # ------------------------------------------------------------------
    # Training losses
    # ------------------------------------------------------------------

    def _user_state(self, domain: str, encoded: EncodedNodes, item_posterior, item_latents: Tensor,
                    edges: tuple[np.ndarray, np.ndarray], streams: RandomStreams, deterministic: bool) -> DomainState:
        graph = self.graphs[domain]
        users, items = edges
        batch_users, rows = np.unique(users, return_inverse=True)
        user_posterior = self.identifier.infer_level1(
            take_rows(encoded.users, batch_users), self.domain_params[domain].identifier, "user")
        user_latents = self.identifier.sample(user_posterior, streams.get("noise"), deterministic)
        if self.exact_reconstruction:
            labels = graph.adjacency.to_dense()[batch_users]
            return DomainState(user_posterior, item_posterior, user_latents, item_latents, labels=labels)
        neg_users, neg_items = sample_negative_batch(graph, users, self.hyper.negatives, streams.get("negatives"))
        neg_rows = np.searchsorted(batch_users, neg_users)
        touched = np.unique(np.concatenate([items, neg_items]))
        return DomainState(
            user_posterior, item_posterior.take_rows(touched), user_latents, item_latents,
            positives=(rows, items), negatives=(neg_rows, neg_items),
        )

    def _group_pairs(self, domain: str, indices: np.ndarray, offset: int, n_total: int,
                     streams: RandomStreams) -> dict:
        graph = self.graphs[domain]
        if self.exact_reconstruction:
            labels = np.zeros((indices.size, n_total))
            labels[:, offset:offset + graph.n_items] = graph.adjacency.to_dense()[indices]
            return {"labels": labels}
        csr = graph.adjacency.csr
        degrees = np.diff(csr.indptr)[indices]
        rows = np.repeat(np.arange(indices.size), degrees)
        items = np.concatenate([graph.positives(u) for u in indices]) + offset
        repeated = np.repeat(indices, degrees)
        rng = streams.get("negatives")
        if self.cross_block_negatives:
            neg_users, neg_items = sample_negative_batch(graph, repeated, self.hyper.negatives, rng,
                                                         n_candidates=n_total, offset=offset)
        else:
            neg_users, neg_items = sample_negative_batch(graph, repeated, self.hyper.negatives, rng)
            neg_items = neg_items + offset
        neg_rows = np.searchsorted(indices, neg_users)
        return {"positives": (rows, items), "negatives": (neg_rows, neg_items)}

    def training_losses(self, batch: dict[str, tuple[np.ndarray, np.ndarray]], epoch: int,
                        streams: RandomStreams, training: bool = True) -> LossBreakdown:
        """
        Forward pass of one optimizer step.

        :param batch: Training edges (user indices, item indices) per domain.
        :param epoch: Current epoch, compared against the warmup.
        :param streams: Random streams for dropout, noise, group sampling and negatives.
        :param training: Dropout and reparameterized sampling on (posterior means otherwise).
        """
        hyper = self.hyper
        active = VARIANT_COMPONENTS[self.variant]
        deterministic = not training
        dropout_rng = streams.get("dropout")
        encoded = {
            domain: self.encoders[domain].encode(self.graphs[domain], self.domain_params[domain].encoder,
                                                 training, dropout_rng)
            for domain in DOMAINS
        }
        components: dict[str, Tensor] = {}

        if self.variant == "A":
            for domain in DOMAINS:
                users, items = batch[domain]
                if self.exact_reconstruction:
                    batch_users = np.unique(users)
                    labels = self.graphs[domain].adjacency.to_dense()[batch_users]
                    loss = exact_reconstruction_loss(take_rows(encoded[domain].users, batch_users),
                                                     encoded[domain].items, labels)
                else:
                    negatives = sample_negative_batch(self.graphs[domain], users, hyper.negatives,
                                                      streams.get("negatives"))
                    loss = reconstruction_loss(encoded[domain].users, encoded[domain].items,
                                               (users, items), negatives)
                components[f"user_{domain}"] = loss
            return total_loss(components, epoch, hyper.warmup)

        item_posteriors, item_latents = {}, {}
        for domain in DOMAINS:
            item_posteriors[domain] = self.identifier.infer_level1(
                encoded[domain].items, self.domain_params[domain].identifier, "item")
            item_latents[domain] = self.identifier.sample(item_posteriors[domain], streams.get("noise"), deterministic)

        if "user_source" in active:
            for domain in DOMAINS:
                state = self._user_state(domain, encoded[domain], item_posteriors[domain], item_latents[domain],
                                         batch[domain], streams, deterministic)
                components[f"user_{domain}"] = user_vib_loss(
                    state, hyper.beta_for(f"user_{domain}"), hyper.beta_for(f"item_{domain}"))

        if self.uses_groups:
            self.check_group_size()
            groups = {}
            for domain in DOMAINS:
                group = sample_group(self.graphs[domain], encoded[domain], hyper.group_size, streams.get("sampling"))
                params = self.domain_params[domain].identifier
                q1 = self.identifier.infer_level1(group.rows, params, "user")
                z1 = self.identifier.sample(q1, streams.get("noise"), deterministic)
                q2 = self.identifier.infer_level2(z1, params)
                z2 = self.identifier.sample(q2, streams.get("noise"), deterministic)
                groups[domain] = (group, q2, self.identifier.prior_level2(z1, params), z2)

            inv = self.matcher.invariant_preference(groups["source"][3], groups["target"][3], self.matching_params,
                                                    training, dropout_rng)
            components["matching"] = matching_loss(inv)

            if "domain" in active:
                n_source = self.graphs["source"].n_items
                n_total = n_source + self.graphs["target"].n_items
                items = stack_items(project_items(item_latents["source"], self.projection),
                                    project_items(item_latents["target"], self.projection))
                states = {}
                for domain, offset in (("source", 0), ("target", n_source)):
                    group, q2, prior, z2 = groups[domain]
                    pairs = self._group_pairs(domain, group.indices, offset, n_total, streams)
                    states[domain] = GroupState(q2, prior, z2, **pairs)
                components["domain"] = domain_vib_loss(
                    CrossDomainState(states["source"], states["target"], items),
                    hyper.beta_for("domain_source"), hyper.beta_for("domain_target"))

        reported = {name: value for name, value in components.items() if name in active}
        return total_loss(reported, epoch, hyper.warmup)

    # ------------------------------------------------------------------
    # Evaluation
    # ------------------------------------------------------------------

    def _domains_of(self, eval_set: EvalSet) -> tuple[str, str]:
        return ("source", "target") if eval_set.direction == "source_to_target" else ("target", "source")

    def user_vectors(self, eval_set: EvalSet) -> np.ndarray:
        """Eval-mode representations of the query users, one row per instance."""
        represented, _ = self._domains_of(eval_set)
        encoder = self.encoders[represented]
        params = self.domain_params[represented]
        initial = encoder.fold_in_embeddings(eval_set.graph, params.encoder, eval_set.n_trained_users)
        encoded = encoder.encode(eval_set.graph, params.encoder, training=False, user_embeddings=initial)
        rows = take_rows(encoded.users, [instance.user for instance in eval_set.instances])
        if self.variant == "A":
            return rows.numpy()
        mean1 = self.identifier.infer_level1(rows, params.identifier, "user").mean
        if self.variant == "B":
            return mean1.numpy()
        return self.identifier.infer_level2(mean1, params.identifier).mean.numpy()

    def item_vectors(self, eval_set: EvalSet) -> np.ndarray:
        """Eval-mode representations of every candidate item of the ranked domain."""
        _, ranked = self._domains_of(eval_set)
        params = self.domain_params[ranked]
        encoded = self.encoders[ranked].encode(self.graphs[ranked], params.encoder, training=False)
        if self.variant == "A":
            return encoded.items.numpy()
        mean1 = self.identifier.infer_level1(encoded.items, params.identifier, "item").mean
        if self.variant == "B":
            return mean1.numpy()
        return project_items(mean1, self.projection).numpy()

    def score_matrix(self, eval_set: EvalSet) -> np.ndarray:
        """Logits of every query user against every candidate item (instances x items)."""
        return self.user_vectors(eval_set) @ self.item_vectors(eval_set).T

    # ------------------------------------------------------------------
    # Persistence
    # ------------------------------------------------------------------

    def meta(self) -> dict:
        return {
            "variant": self.variant,
            "hyper": {k: v for k, v in vars(self.hyper).items()},
            "source_users": self.graphs["source"].n_users,
            "target_users": self.graphs["target"].n_users,
        }

    def save(self, path: str | Path) -> Path:
        """Write every parameter plus a JSON header into one .npz container at ``path``."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        buffer = io.BytesIO()
        np.savez(buffer, __meta__=np.array(json.dumps(self.meta())), **self.snapshot())
        path.write_bytes(buffer.getvalue())
        self.logger.info(f"[Model] saved parameters to {path}")
        return path

    def load(self, path: str | Path) -> "DPMCDRModel":
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"model file not found: {path}")
        with np.load(path, allow_pickle=False) as archive:
            meta = json.loads(archive["__meta__"].item())
            if meta.get("variant") != self.variant:
                raise ValueError(f"model file holds variant '{meta.get('variant')}', expected '{self.variant}'")
            self.restore({name: archive[name] for name in archive.files if name != "__meta__"})
        self.logger.info(f"[Model] loaded parameters from {path}")
        return self


def full_model_grad_check(logger: logging.Logger, seed: int = 1, users: int = 6, items: int = 5,
                          variant: str = "full") -> float:
    """
    Finite-difference check of every trainable parameter on a small random domain pair
    (K=2, d=4, N=4, dropout off). Noise, groups and negatives are replayed from fresh
    streams on every pass, so the loss is a deterministic function of the parameters.

    :return: Max relative error over all parameter entries.
    """
    from .Synthetic import toy_domain_graphs
    from .Tensor import grad_check

    source, target = toy_domain_graphs(seed, users, items)
    hyper = HyperParams(layers=2, dim=4, group_size=4, heads=2, dropout=0.0, warmup=0,
                        batch_size=10 ** 6, negatives=2, seed=seed)
    model = DPMCDRModel(logger, hyper, source, target, AblationSettings(variant=variant))
    batch = {domain: model.graphs[domain].edges() for domain in DOMAINS}

    def loss_fn():
        return model.training_losses(batch, 0, RandomStreams(seed), training=True).objective

    error = grad_check(loss_fn, model.parameters())
    logger.info(f"[Model] gradient check over {sum(p.values.size for p in model.parameters())} entries: max relative error {error:.3e}")
    return error
