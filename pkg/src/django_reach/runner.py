"""
One analysis run: reads the model, builds the matrices, optionally reorders, explores and checks.
Shared by the reach management command and the console script.
"""
__author__ = "Thorin Schiffer"

import logging
from dataclasses import dataclass, field
from typing import Dict, Optional, TextIO

from django_reach import bridge, engine, semantics
from django_reach.depmatrix import build_matrices, format_matrices
from django_reach.elaborate import elaborate
from django_reach.exceptions import ConfigurationError
from django_reach.ldd import LddStore
from django_reach.ordering import VariableOrder, apply_order, combined_matrix, metrics, sloan_order
from django_reach.parser import parse_file
from django_reach.report import (
    Summary,
    format_machine,
    format_stats,
    format_text,
    summarize_explicit,
    summarize_symbolic,
)

logger = logging.getLogger(__name__)

STRATEGIES = ("bfs", "chaining", "explicit")
ORDERS = ("natural", "sloan")
FORMATS = ("text", "machine")


@dataclass
class RunConfig:
    model: Optional[str] = None
    constants: Dict[str, int] = field(default_factory=dict)
    strategy: Optional[str] = None
    order: str = "natural"
    deadlock: bool = False
    invariant: bool = False
    remote: Optional[str] = None
    serve: Optional[str] = None
    matrices: bool = False
    stats: bool = False
    format: str = "text"
    node_table: Optional[int] = None
    cache: Optional[int] = None
    graph: Optional[str] = None

    def validate(self):
        """
        Rejects flag combinations that make no sense together
        """
        if self.serve and self.remote:
            raise ConfigurationError("--serve and --remote exclude each other")
        if self.serve and (self.strategy or self.deadlock or self.invariant):
            raise ConfigurationError("--serve does not explore, drop --strategy, --deadlock and --invariant")
        if not self.model and not self.remote:
            raise ConfigurationError("a model file is required unless --remote is given")
        if self.remote and not self.model:
            if self.strategy == "explicit":
                raise ConfigurationError("--strategy explicit needs a local model")
            if self.invariant or self.matrices or self.order != "natural":
                raise ConfigurationError("--invariant, --matrices and --order need the model file")
        if self.graph and self.strategy != "explicit":
            raise ConfigurationError("--graph needs --strategy explicit")
        if self.strategy is not None and self.strategy not in STRATEGIES:
            raise ConfigurationError(f"unknown strategy {self.strategy}")
        for flag, size in (("--node-table", self.node_table), ("--cache", self.cache)):
            if size is not None and size <= 0:
                raise ConfigurationError(f"{flag} must be positive, got {size}")


def load(config: RunConfig):
    em = elaborate(parse_file(config.model), config.constants)
    return em, build_matrices(em)


def _reorder(em, dm):
    cm = combined_matrix(dm)
    natural = VariableOrder.identity(em.N)
    order = sloan_order(cm, em.N)
    before, after = metrics(cm, natural), metrics(cm, order)
    logger.info(
        "sloan order %s: bandwidth %d -> %d", order.names(em.variables), before["bandwidth"], after["bandwidth"]
    )
    em, dm = apply_order(em, dm, order)
    return em, dm, {"natural": before, "sloan": after}


def _explicit(config: RunConfig, em, out: TextIO) -> Summary:
    result = semantics.explicit_reach(em)
    violations = semantics.check_invariant(em, sorted(result.states)) if config.invariant else None
    if config.graph:
        dump = semantics.format_graph(result, em)
        if config.graph == "-":
            out.write(dump)
        else:
            try:
                with open(config.graph, "w", encoding="utf-8") as f:
                    f.write(dump)
            except OSError as e:
                raise ConfigurationError(f"cannot write {config.graph}: {e.strerror}")
    return summarize_explicit(result, em, check_deadlocks=config.deadlock, violations=violations)


def _symbolic(config: RunConfig, em, dm) -> Summary:
    provider = bridge.connect(config.remote) if config.remote else engine.local_provider(em, dm)
    with provider:
        store = LddStore(config.node_table, config.cache)
        report = engine.reach(provider, config.strategy or engine.BFS, store)
        if config.deadlock:
            engine.symbolic_deadlocks(report, provider)
        violations = engine.invariant_violations(report, em) if config.invariant else None
    name = em.name if em is not None else config.remote
    return summarize_symbolic(report, name, violations)


def execute(config: RunConfig, out: TextIO) -> Optional[Summary]:
    """
    Runs the analysis described by the configuration and writes its output
    @param config: the run configuration
    @param out: stream the report is written to
    @return: the run summary, None for --matrices and --serve
    """
    config.validate()
    em = dm = None
    if config.model:
        em, dm = load(config)
    if config.matrices:
        out.write(format_matrices(dm))
        return None
    if config.serve:
        frames = bridge.serve(em, config.serve, dm)
        logger.info("answered %d NEXT_REQ frames", frames[bridge.NEXT_REQ])
        return None
    order_metrics = {}
    if config.order == "sloan":
        em, dm, order_metrics = _reorder(em, dm)
    if config.strategy == "explicit":
        summary = _explicit(config, em, out)
    else:
        summary = _symbolic(config, em, dm)
    summary.metrics = order_metrics
    if config.format == "machine":
        out.write(format_machine(summary))
    elif config.stats:
        out.write(format_stats(summary))
    else:
        out.write(format_text(summary))
    return summary
