"""Discrete-event kernel, broadcast channel, and scenario orchestration.

The channel is deliberately simple: every frame reaches every other node
after its airtime (frame bits over the bitrate), with optional independent
loss; there is no contention, no retransmission, and nodes are static for
the run.  The queueing behaviour under study is driven entirely by arrival
rates and the verification delay ``tau``, so the kernel's job is exact
bookkeeping: one run is fully determined by its configuration and seed,
with event ties broken by (time, event-kind rank, sequence number).

Two verification schemes are wired in: ``cooperative`` (random queue
insertion, claim scanning, probabilistic spot checks) and ``baseline``
(verify every message first-come-first-served, no claims).
"""

from __future__ import annotations

import itertools
import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from enum import IntEnum
from heapq import heappop, heappush
from math import floor
from typing import Iterator, List, NamedTuple, Optional, Tuple

from .core import NodeId, Role, SignedCam, compute_digest, encode_signed_cam
from .engine import Disposition, DispositionKind, NodeState
from .metrics import MetricsLedger, ReplicationResult, pool_replications
from .threat import AdversaryConfig, AdversaryDriver, MisbehaviorReport, RevocationRegistry, detect_false_claim

SCHEMES = ("baseline", "cooperative")


class ConfigError(ValueError):
    """Invalid scenario configuration; raised before any simulation work."""


@dataclass(frozen=True, slots=True)
class DetectionConfig:
    """Revocation threshold and optional detection extensions."""

    votes_needed: int = 5
    # Off by default: remember rejected bogus digests and report any later
    # accepted claim that references one.  The base scheme credits
    # detection to spot checks alone.
    blacklist_rejected: bool = False


@dataclass(frozen=True, slots=True)
class ScenarioConfig:
    """One scenario: default values are the evaluation's default setting."""

    n_nodes: int = 30
    pr_check: float = 0.2
    alpha: int = 5
    tau: float = 0.005
    gamma: float = 10.0
    scheme: str = "cooperative"
    duration: float = 120.0
    area_side: float = 200.0
    bitrate: float = 6_000_000.0
    seed: int = 1
    loss_prob: float = 0.0
    adversary: Optional[AdversaryConfig] = None
    detection: DetectionConfig = DetectionConfig()
    record_all_nodes: bool = False
    audit: bool = False

    def validate(self) -> None:
        if self.n_nodes < 1:
            raise ConfigError(f"n_nodes must be >= 1, got {self.n_nodes}")
        if not 0.0 <= self.pr_check <= 1.0:
            raise ConfigError(f"pr_check must be in [0, 1], got {self.pr_check}")
        if self.alpha < 0:
            raise ConfigError(f"alpha must be >= 0, got {self.alpha}")
        if self.tau <= 0:
            raise ConfigError(f"tau must be positive, got {self.tau}")
        if self.gamma <= 0:
            raise ConfigError(f"gamma must be positive, got {self.gamma}")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.duration <= 0:
            raise ConfigError(f"duration must be positive, got {self.duration}")
        if self.area_side <= 0:
            raise ConfigError(f"area_side must be positive, got {self.area_side}")
        if self.bitrate <= 0:
            raise ConfigError(f"bitrate must be positive, got {self.bitrate}")
        if not 0.0 <= self.loss_prob <= 1.0:
            raise ConfigError(f"loss_prob must be in [0, 1], got {self.loss_prob}")
        if self.detection.votes_needed < 1:
            raise ConfigError("detection.votes_needed must be >= 1")
        if self.adversary is not None:
            try:
                self.adversary.validate(self.alpha)
            except ValueError as exc:
                raise ConfigError(str(exc)) from exc


class EventKind(IntEnum):
    """Tie-break rank is the enum value: generations before deliveries
    before verification completions, run end last."""

    CAM_GENERATION = 0
    FRAME_DELIVERY = 1
    VERIFICATION_COMPLETE = 2
    RUN_END = 3


class Event(NamedTuple):
    time: float
    kind: EventKind
    seq: int
    payload: tuple


def place_nodes(config: ScenarioConfig, rng: random.Random) -> List[Tuple[float, float]]:
    """Evaluated node at the area centre, the rest i.i.d. uniform."""
    if config.n_nodes < 1:
        raise ConfigError("n_nodes must be >= 1")
    side = config.area_side
    positions = [(side / 2.0, side / 2.0)]
    for _ in range(config.n_nodes - 1):
        positions.append((rng.uniform(0.0, side), rng.uniform(0.0, side)))
    return positions


def beacon_times(phase: float, gamma: float, duration: float) -> Iterator[float]:
    """Generation instants: ``phase + k/gamma`` for every k within the run.

    Computed by index, not by accumulation, so the k-th instant is the same
    arithmetic the kernel schedules with.
    """
    k = 0
    while True:
        t = phase + k / gamma
        if t >= duration:
            return
        yield t
        k += 1


def airtime(n_bytes: int, bitrate: float) -> float:
    """Seconds a frame of ``n_bytes`` occupies the channel."""
    return 8.0 * n_bytes / bitrate


def broadcast(
    frame: SignedCam,
    sender_id: int,
    now: float,
    config: ScenarioConfig,
    total_nodes: int,
    channel_rng: random.Random,
    seq: "itertools.count[int]",
) -> Tuple[List[Event], int]:
    """Delivery events for one transmitted frame.

    Every node except the sender receives the frame one airtime after
    ``now``; with ``loss_prob`` set, each delivery is dropped
    independently.  Returns the events plus the number of losses.
    """
    encoded = encode_signed_cam(frame)
    digest = compute_digest(frame)
    deliver_at = now + airtime(len(encoded), config.bitrate)
    loss = config.loss_prob
    events: List[Event] = []
    lost = 0
    for rid in range(total_nodes):
        if rid == sender_id:
            continue
        if loss > 0.0 and channel_rng.random() < loss:
            lost += 1
            continue
        events.append(Event(deliver_at, EventKind.FRAME_DELIVERY, next(seq), (rid, frame, digest)))
    return events, lost


class SimulationKernel:
    """Single-threaded event loop owning every node and the registry."""

    def __init__(self, config: ScenarioConfig) -> None:
        config.validate()
        self.config = config
        self.total_nodes = config.n_nodes + (1 if config.adversary is not None else 0)
        self.adversary_id = config.n_nodes if config.adversary is not None else None

        base = str(config.seed)
        placement_rng = random.Random(f"{base}:placement")
        positions = place_nodes(config, placement_rng)
        if self.adversary_id is not None:
            positions.append(
                (placement_rng.uniform(0.0, config.area_side),
                 placement_rng.uniform(0.0, config.area_side))
            )

        cooperative = config.scheme == "cooperative"
        period = 1.0 / config.gamma
        self.nodes: List[NodeState] = []
        self._phase: List[float] = []
        self._gen_index: List[int] = []
        for i in range(self.total_nodes):
            role = Role.ADVERSARY if i == self.adversary_id else Role.BENIGN
            rng = random.Random(f"{base}:node:{i}")
            node = NodeState(
                NodeId(i, role),
                positions[i],
                cooperative=cooperative,
                pr_check=config.pr_check,
                alpha=config.alpha,
                tau=config.tau,
                rng=rng,
                audit=config.audit,
                blacklist_rejected=config.detection.blacklist_rejected,
            )
            self.nodes.append(node)
            self._phase.append(rng.uniform(0.0, period) if role is Role.BENIGN else 0.0)
            self._gen_index.append(0)

        self.driver: Optional[AdversaryDriver] = None
        if self.adversary_id is not None:
            self.driver = AdversaryDriver(
                node=self.nodes[self.adversary_id],
                config=config.adversary,
                alpha=config.alpha,
                rng=self.nodes[self.adversary_id].rng,
                area_side=config.area_side,
            )

        self.registry = RevocationRegistry(config.detection.votes_needed)
        self.channel_rng = random.Random(f"{base}:channel")
        self.ledger = MetricsLedger(
            seed=config.seed,
            scheme=config.scheme,
            duration=config.duration,
            evaluated_node=0,
            record_all=config.record_all_nodes,
        )
        self._seq = itertools.count()
        self._heap: List[Event] = []
        for i in range(self.total_nodes):
            if i == self.adversary_id:
                first = self.driver.next_emission_time()
            else:
                first = self._phase[i]
            if first < config.duration:
                heappush(self._heap, Event(first, EventKind.CAM_GENERATION, next(self._seq), (i,)))
        heappush(
            self._heap,
            Event(config.duration, EventKind.RUN_END, next(self._seq), ()),
        )

    # -- event handlers ------------------------------------------------------

    def _handle_generation(self, node_id: int, now: float) -> None:
        cfg = self.config
        if self.driver is not None and node_id == self.adversary_id:
            frame = self.driver.emit(now)
            nxt = self.driver.next_emission_time()
        else:
            frame = self.nodes[node_id].build_own_cam(now)
            self._gen_index[node_id] += 1
            nxt = self._phase[node_id] + self._gen_index[node_id] / cfg.gamma
        if nxt < cfg.duration:
            heappush(self._heap, Event(nxt, EventKind.CAM_GENERATION, next(self._seq), (node_id,)))
        events, lost = broadcast(
            frame, node_id, now, cfg, self.total_nodes, self.channel_rng, self._seq
        )
        self.ledger.lost_frames += lost
        for ev in events:
            heappush(self._heap, ev)

    def _start_verification(self, node: NodeState, now: float) -> None:
        flight = node.pop_and_verify(now)
        heappush(
            self._heap,
            Event(
                flight.completes_at,
                EventKind.VERIFICATION_COMPLETE,
                next(self._seq),
                (node.node_id.id, flight),
            ),
        )

    def _handle_completion(self, node_id: int, flight, now: float) -> None:
        node = self.nodes[node_id]
        job = flight.job
        if job.message.cam.sender.id in self.registry.revoked:
            # Sender revoked while the check ran: the result is discarded,
            # nothing is accepted and no claims are scanned.
            node.in_flight = None
            node.verifications_completed += 1
            if node_id == 0:
                self.ledger.busy_time += node.tau
            self.ledger.record_disposition(
                node_id,
                Disposition(
                    outcome=DispositionKind.PURGED_REVOKED,
                    digest=job.digest,
                    sender=job.message.cam.sender,
                    enqueue_time=job.enqueue_time,
                    leave_queue_time=flight.popped_at,
                    waiting_time=flight.popped_at - job.enqueue_time,
                    signature_valid=flight.valid,
                ),
            )
        else:
            result = node.finish_verification(flight)
            if node_id == 0:
                self.ledger.busy_time += node.tau
            self.ledger.record_disposition(node_id, result.disposition)
            if result.valid:
                if node.cooperative:
                    app = node.apply_claims(result.job.message, result.job.digest, now)
                    for disp in app.dispositions:
                        self.ledger.record_disposition(node_id, disp)
                    self.ledger.record_claims(node_id, app.matched, app.spot_checked)
                    if node.node_id.role is Role.BENIGN:
                        for claimant, claim_digest, bogus_digest in app.blacklist_hits:
                            self._submit_report(
                                MisbehaviorReport(
                                    reporter=node.node_id,
                                    accused=claimant,
                                    claim_digest=claim_digest,
                                    bogus_digest=bogus_digest,
                                    time=now,
                                )
                            )
            else:
                report = detect_false_claim(node.node_id, result, now)
                if report is not None and node.node_id.role is Role.BENIGN:
                    self._submit_report(report)
        if len(node.queue):
            self._start_verification(node, now)

    def _submit_report(self, report: MisbehaviorReport) -> None:
        self.ledger.record_report(report)
        if self.registry.add_report(report):
            self._apply_revocation(report.accused.id, report.time)

    def _apply_revocation(self, accused_id: int, now: float) -> None:
        self.ledger.record_revocation(accused_id, now)
        for node in self.nodes:
            for disp in node.purge_sender(accused_id, now):
                self.ledger.record_disposition(node.node_id.id, disp)

    # -- main loop -------------------------------------------------------------

    def run(self) -> MetricsLedger:
        cfg = self.config
        heap = self._heap
        nodes = self.nodes
        node0_jobs = nodes[0].queue.jobs
        revoked = self.registry.revoked
        dropped = 0
        pop = heappop
        last_second = int(floor(cfg.duration))
        next_sample = 0
        samples = self.ledger.queue_len_samples
        delivery = EventKind.FRAME_DELIVERY
        generation = EventKind.CAM_GENERATION
        run_end = EventKind.RUN_END
        while heap:
            ev = pop(heap)
            kind = ev.kind
            if kind is run_end:
                break
            t = ev.time
            while next_sample <= t and next_sample <= last_second:
                samples.append(len(node0_jobs))
                next_sample += 1
            if kind is delivery:
                rid, frame, digest = ev.payload
                if frame.cam.sender.id in revoked:
                    dropped += 1
                    continue
                node = nodes[rid]
                if node.receive(frame, digest, t) is not None and node.in_flight is None:
                    self._start_verification(node, t)
            elif kind is generation:
                self._handle_generation(ev.payload[0], t)
            else:
                nid, flight = ev.payload
                self._handle_completion(nid, flight, t)
        while next_sample <= last_second:
            samples.append(len(node0_jobs))
            next_sample += 1
        self.ledger.dropped_revoked_frames += dropped
        self._finalize()
        return self.ledger

    def _finalize(self) -> None:
        cfg = self.config
        ledger = self.ledger
        ledger.final_queue_len = len(self.nodes[0].queue)
        for node in self.nodes:
            nid = node.node_id.id
            flight = node.in_flight
            if flight is not None:
                # The pop happened inside the run; the check is allowed to
                # finish (its outcome is already determined), but no claims
                # or reports fire past the end of the run.
                result = node.finish_verification(flight)
                if nid == 0:
                    ledger.busy_time += max(
                        0.0, min(flight.completes_at, cfg.duration) - flight.popped_at
                    )
                ledger.record_disposition(nid, result.disposition)
            for disp in node.drain_unprocessed(cfg.duration):
                ledger.record_disposition(nid, disp)
            ledger.receptions[nid] = node.receptions
            ledger.duplicates[nid] = node.queue.duplicates_dropped
            ledger.verifications_completed[nid] = node.verifications_completed


def run_scenario(config: ScenarioConfig) -> MetricsLedger:
    """Execute one seeded run and return its ledger."""
    return SimulationKernel(config).run()


def run_replications(config: ScenarioConfig, n_runs: int, workers: int = 1) -> ReplicationResult:
    """Run ``n_runs`` seeds (``seed .. seed+n_runs-1``) and pool the results.

    With ``workers > 1`` the runs execute on a process pool; results are
    merged in run order either way, so the output is identical.
    """
    if n_runs < 1:
        raise ConfigError("n_runs must be >= 1")
    configs = [replace(config, seed=config.seed + i) for i in range(n_runs)]
    if workers > 1 and n_runs > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            ledgers = list(pool.map(run_scenario, configs))
    else:
        ledgers = [run_scenario(c) for c in configs]
    return pool_replications(ledgers)
