"""Commands, location identification, planning, execution and decisions.

The workflow mirrors the assistant loop: a structured command is clarified
against a scripted user, the camera pipeline proposes candidate locations
(segment -> ARCK crops -> detect), a plan equips the selected module and
visits candidates nearest-first, and explicit rules turn the gathered
evidence into an answer.  Every simulated second spent on the ground or in
the air is written to the mission log.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .clustering import ClusteringConfig, arck_means, emit_crops
from .drone import (ACTUATOR, CAMERA, BatteryExhausted, Drone, SensorModuleSpec, Unreachable,
                    flight_budget, get_module)
from .environment import FIELD_KINDS, World
from .geometry import Point2, Rect
from .ground_station import (ModuleUnavailable, NotAligned, Station, SwapRequest, land, swap_module)
from .perception import OracleParams, SplitModel, close_up_confirm, detect, image_bounds, segment

TASK_KINDS = ("ID", "State", "Surveillance", "Actuation")
# adjective -> direction of the extreme it asks for
SPECIFIC_ADJECTIVES = {"warmest": 1, "coolest": -1, "brightest": 1, "darkest": -1,
                       "most_humid": 1, "driest": -1, "quietest": -1}


class UnresolvableCommand(ValueError):
    pass


class NoCandidates(RuntimeError):
    pass


class NoModuleForModality(KeyError):
    pass


class InconclusiveEvidence(RuntimeError):
    pass


class MisalignedLanding(RuntimeError):
    pass


class PlanError(ValueError):
    pass


@dataclass(frozen=True)
class Command:
    task_kind: str
    target: str
    modality_hint: str | None = None
    adjective: str | None = None
    payload: str | None = None
    deadline: float | None = None
    location: Point2 | None = None

    def __post_init__(self):
        if self.task_kind not in TASK_KINDS:
            raise ValueError(f"unknown task kind {self.task_kind!r}")
        if self.task_kind == "Actuation" and self.payload is None:
            raise ValueError("Actuation commands need a payload")

    @property
    def vague(self) -> bool:
        return self.adjective is not None and self.adjective not in SPECIFIC_ADJECTIVES


@dataclass(frozen=True)
class ClarifyPolicy:
    """Scripted user: answers to vague terms, and where to go when asked."""

    answers: dict = field(default_factory=dict)
    location_answer: Point2 | None = None


def clarify(cmd: Command, policy: ClarifyPolicy, n_candidates: int = 0) -> tuple[Command, int]:
    """Resolve vague terms by asking the scripted user; counts the initial command.

    Each lookup in the policy table is one prompt.  An actuation with more
    than one candidate location costs one more prompt.
    """
    prompts = 1
    adj, target = cmd.adjective, cmd.target
    for _ in range(16):
        if adj is None or adj in SPECIFIC_ADJECTIVES:
            break
        if adj not in policy.answers:
            raise UnresolvableCommand(f"no answer for vague term {adj!r}")
        adj = policy.answers[adj]
        prompts += 1
    else:
        raise UnresolvableCommand("clarification does not terminate")
    seen = set()
    while target in policy.answers and target not in seen:
        seen.add(target)
        target = policy.answers[target]
        prompts += 1
    if cmd.task_kind == "Actuation" and n_candidates > 1:
        if policy.location_answer is None:
            raise UnresolvableCommand("several candidate locations and no scripted answer")
        prompts += 1
    return Command(cmd.task_kind, target, cmd.modality_hint, adj, cmd.payload, cmd.deadline,
                   cmd.location), prompts


# --- module selection --------------------------------------------------------------

DEFAULT_SELECTION = {
    ("find_object", CAMERA): "Drone Cam",
    ("seat", "temperature"): "Temp&Moisture",
    ("seat", "humidity"): "Temp&Moisture",
    ("seat", "light"): "Light Sensor",
    ("state", "humidity"): "Temp&Moisture",
    ("state", "temperature"): "Temp&Moisture",
    ("surveillance", "pm"): "PM2.5",
    ("surveillance", "gas"): "Alcohol",
    ("surveillance", "co2"): "CO2",
    ("delivery", ACTUATOR): "Actuator",
    ("compound", ACTUATOR): "Actuator",
    ("compound", "temperature"): "Temp&Moisture",
    ("compound", "humidity"): "Temp&Moisture",
    ("compound", "light"): "Light Sensor",
}


@dataclass(frozen=True)
class ModuleSelectionTable:
    table: dict = field(default_factory=lambda: dict(DEFAULT_SELECTION))

    def select(self, template: str, modality: str) -> SensorModuleSpec:
        try:
            return get_module(self.table[(template, modality)])
        except KeyError:
            raise NoModuleForModality(f"{template}/{modality}") from None


# --- location identification -------------------------------------------------------

@dataclass(frozen=True)
class PerceptionConfig:
    clustering: ClusteringConfig = field(default_factory=ClusteringConfig)
    split: SplitModel = field(default_factory=SplitModel)
    oracle: OracleParams = field(default_factory=OracleParams)
    dedup_radius: float = 0.5


@dataclass(frozen=True)
class Candidate:
    location: Point2
    crop_id: int
    score: float


def image_crops(world: World, cfg: PerceptionConfig, t: float, rng: np.random.Generator,
                variant: str = "arck") -> list[Rect]:
    bounds = image_bounds(world)
    if variant == "whole":
        return [bounds]
    if variant != "arck":
        raise ValueError(f"unknown crop variant {variant!r}")
    masks = segment(world, cfg.split, t, rng)
    if not masks:
        return [bounds]
    return emit_crops(arck_means(masks, cfg.clustering, bounds), bounds, cfg.clustering)


def dedup(cands: Sequence[Candidate], radius: float) -> list[Candidate]:
    """Greedy merge: highest score first, drop anything within ``radius``."""
    order = sorted(range(len(cands)), key=lambda i: (-cands[i].score, i))
    kept: list[Candidate] = []
    for i in order:
        c = cands[i]
        if all(c.location.dist(k.location) > radius for k in kept):
            kept.append(c)
    return kept


def identify_locations(query: str, world: World, cfg: PerceptionConfig, rng: np.random.Generator,
                       t: float = 0.0, variant: str = "arck", specific: bool = True,
                       crops: list[Rect] | None = None) -> list[Candidate]:
    """Candidate locations for ``query``: detection box centers, deduplicated.

    Raises NoCandidates when nothing is detected.
    """
    if crops is None:
        crops = image_crops(world, cfg, t, rng, variant)
    found = []
    for ci, crop in enumerate(crops):
        for d in detect(crop, query, world, cfg.oracle, rng, t, specific):
            found.append(Candidate(d.bbox.center, ci, d.score))
    out = dedup(found, cfg.dedup_radius)
    if not out:
        raise NoCandidates(f"no {query} found")
    return out


# --- plans -----------------------------------------------------------------------

@dataclass(frozen=True)
class EquipModule:
    module: str
    payload: str | None = None
    phase: int = 0


@dataclass(frozen=True)
class Takeoff:
    phase: int = 0


@dataclass(frozen=True)
class FlyTo:
    target: Point2 | None
    phase: int = 0
    from_phase: int | None = None


@dataclass(frozen=True)
class SenseAt:
    target: Point2
    kind: str
    duration: float
    phase: int = 0
    index: int = 0


@dataclass(frozen=True)
class CaptureAt:
    target: Point2
    query: str
    frames: int
    phase: int = 0
    index: int = 0


@dataclass(frozen=True)
class ReturnAndLand:
    phase: int = 0
    recharge: bool = False


@dataclass(frozen=True)
class SwapModule:
    request: SwapRequest
    phase: int = 0


@dataclass(frozen=True)
class Deliver:
    target: Point2 | None
    phase: int = 0
    from_phase: int | None = None


Step = EquipModule | Takeoff | FlyTo | SenseAt | CaptureAt | ReturnAndLand | SwapModule | Deliver


@dataclass(frozen=True)
class MissionPlan:
    steps: tuple
    candidate_locations: tuple = ()
    phases: tuple = ()
    modules: tuple = ()
    stop_at_first: tuple = ()

    def kinds(self) -> list[str]:
        return [type(s).__name__ for s in self.steps]


@dataclass(frozen=True)
class PlanSettings:
    station: Point2
    speed: float = 0.5
    takeoff_time: float = 2.0
    landing_time: float = 7.8
    sense_duration: float = 5.0
    capture_frames: int = 3
    frame_time: float = 1.0
    release_time: float = 2.0
    safety_factor: float = 0.9


def nearest_neighbor_order(start: Point2, points: Sequence[Point2]) -> list[int]:
    left = list(range(len(points)))
    order, cur = [], start
    while left:
        j = min(left, key=lambda i: (cur.dist(points[i]), i))
        order.append(j)
        left.remove(j)
        cur = points[j]
    return order


def _action_time(cmd: Command, template: str, s: PlanSettings) -> float:
    if cmd.task_kind == "Actuation":
        return s.release_time
    if template == "find_object":
        return s.capture_frames * s.frame_time
    return s.sense_duration


def _modality(cmd: Command, template: str) -> str:
    if cmd.task_kind == "Actuation":
        return ACTUATOR
    if template == "find_object":
        return CAMERA
    if cmd.modality_hint is None or cmd.modality_hint not in FIELD_KINDS:
        raise NoModuleForModality(f"{template}: no sensing modality for {cmd.target!r}")
    return cmd.modality_hint


def _phase_steps(cmd: Command, template: str, targets: Sequence[Point2], s: PlanSettings,
                 budget: float, phase: int, from_phase: int | None = None) -> list:
    """Visit legs for one phase, split into sorties that fit the budget."""
    act = _action_time(cmd, template, s)
    steps: list = [Takeoff(phase)]
    if from_phase is not None:
        return steps + [FlyTo(None, phase, from_phase), Deliver(None, phase, from_phase), ReturnAndLand(phase)]
    order = nearest_neighbor_order(s.station, targets)
    cap = budget * s.safety_factor
    used, cur = s.takeoff_time, s.station
    for n, j in enumerate(order):
        p = targets[j]
        leg = cur.dist(p) / s.speed
        home = p.dist(s.station) / s.speed
        if n > 0 and used + leg + act + home + s.landing_time > cap:
            steps += [ReturnAndLand(phase, recharge=True), Takeoff(phase)]
            used, cur = s.takeoff_time, s.station
            leg = cur.dist(p) / s.speed
        steps.append(FlyTo(p, phase))
        if cmd.task_kind == "Actuation":
            steps.append(Deliver(p, phase))
        elif template == "find_object":
            steps.append(CaptureAt(p, cmd.target, s.capture_frames, phase, j))
        else:
            steps.append(SenseAt(p, cmd.modality_hint, s.sense_duration, phase, j))
        used += leg + act
        cur = p
    steps.append(ReturnAndLand(phase))
    return steps


def plan(cmd: Command, candidates: Sequence[Candidate | Point2], table: ModuleSelectionTable,
         template: str, settings: PlanSettings, budget: float | None = None) -> MissionPlan:
    """Single-phase plan: equip, visit candidates nearest-first, come home."""
    return compose_multistep([(cmd, candidates, template)], table, settings, budgets=[budget])


def _points(cands) -> list[Point2]:
    return [c.location if isinstance(c, Candidate) else Point2(*c) for c in cands]


def compose_multistep(phases: Sequence[tuple], table: ModuleSelectionTable, settings: PlanSettings,
                      budgets: Sequence[float | None] | None = None, chain: bool = False) -> MissionPlan:
    """Concatenate phase plans with one ReturnAndLand + SwapModule joint each.

    ``phases`` holds ``(command, candidates, template)``; with ``chain`` the
    last phase delivers to the location decided by the phase before it.
    """
    if not phases:
        raise PlanError("no phases")
    steps: list = []
    mods, cmds, stops, cand_locs = [], [], [], []
    prev = None
    for i, (cmd, cands, template) in enumerate(phases):
        mod = table.select(template, _modality(cmd, template))
        pts = _points(cands)
        link = i - 1 if chain and i == len(phases) - 1 and i > 0 else None
        if not pts and link is None:
            if not (cmd.task_kind == "Actuation" and cmd.location is not None):
                raise PlanError(f"phase {i} has no candidates")
            pts = [cmd.location]
        budget = (budgets[i] if budgets else None) or flight_budget(mod)
        if i == 0:
            steps.append(EquipModule(mod.name, cmd.payload, 0))
        else:
            # the previous phase's trailing ReturnAndLand is the joint's landing
            steps.append(SwapModule(SwapRequest(prev.name, mod.name, cmd.payload), i))
        steps += _phase_steps(cmd, template, pts, settings, budget, i, link)
        cand_locs += [(p, i) for p in pts]
        mods.append(mod.name)
        cmds.append(cmd)
        stops.append(template == "find_object")
        prev = mod
    return MissionPlan(tuple(steps), tuple(cand_locs), tuple(cmds), tuple(mods), tuple(stops))


def validate_plan(p: MissionPlan) -> None:
    """Static checks: sensing matches the module, joints are well formed."""
    from .drone import get_module as _gm

    current = None
    payload = None
    airborne = False
    for k, s in enumerate(p.steps):
        if isinstance(s, EquipModule):
            current, payload = _gm(s.module), s.payload
        elif isinstance(s, SwapModule):
            if airborne:
                raise PlanError("swap while airborne")
            current, payload = _gm(s.request.attach), s.request.payload
        elif isinstance(s, Takeoff):
            airborne = True
        elif isinstance(s, ReturnAndLand):
            airborne = False
        elif isinstance(s, SenseAt):
            if current is None or not current.senses(s.kind):
                raise PlanError(f"step {k}: SenseAt {s.kind} without a matching module")
        elif isinstance(s, CaptureAt):
            if current is None or current.modality != CAMERA:
                raise PlanError(f"step {k}: CaptureAt without a camera module")
        elif isinstance(s, Deliver):
            if payload is None:
                raise PlanError(f"step {k}: Deliver without a loaded payload")
            payload = None
    for i, (n_land, n_swap) in enumerate(joint_counts(p), start=1):
        if n_land != 1 or n_swap != 1:
            raise PlanError(f"phase boundary {i} has {n_land} landings and {n_swap} swaps")


def joint_counts(p: MissionPlan) -> list[tuple[int, int]]:
    """(ReturnAndLand, SwapModule) counts at each phase boundary.

    A boundary runs from the last step of phase i-1 up to the first
    Takeoff of phase i.
    """
    out = []
    for i in range(1, len(p.phases)):
        last_prev = max(k for k, s in enumerate(p.steps) if s.phase == i - 1)
        first_fly = next((k for k, s in enumerate(p.steps) if s.phase == i and isinstance(s, Takeoff)),
                         len(p.steps))
        joint = p.steps[last_prev:first_fly]
        out.append((sum(isinstance(s, ReturnAndLand) for s in joint),
                    sum(isinstance(s, SwapModule) for s in joint)))
    return out


# --- decisions -------------------------------------------------------------------

@dataclass(frozen=True)
class DecisionRule:
    delta: float = 0.3
    threshold: float | None = None
    m: int = 3
    n: int = 5


@dataclass(frozen=True)
class SeriesEvidence:
    location: Point2
    values: tuple
    index: int = 0


@dataclass(frozen=True)
class CaptureEvidence:
    location: Point2
    t: float
    confirmed_at: Point2 | None
    index: int = 0


def robust_mean(values) -> float:
    return float(np.median(np.asarray(values, dtype=float)))


def m_of_n(values, threshold: float, m: int, n: int) -> bool:
    """True when some window of ``n`` consecutive samples has ``m`` above threshold."""
    v = np.asarray(values, dtype=float) > threshold
    if len(v) == 0:
        return False
    n = min(n, len(v))
    m = min(m, n)
    c = np.concatenate([[0], np.cumsum(v)])
    return bool(np.any(c[n:] - c[:-n] >= m))


def decide(cmd: Command, evidence: Sequence, rule: DecisionRule):
    """Answer from evidence.

    ID + adjective: location with the extreme median (ties to the first).
    ID object: earliest confirmed capture, or None.
    State / Surveillance: list of locations whose series passes m-of-n.
    """
    if cmd.task_kind == "ID" and cmd.adjective is not None:
        if cmd.adjective not in SPECIFIC_ADJECTIVES:
            raise UnresolvableCommand(f"vague adjective {cmd.adjective!r}")
        if not evidence:
            raise InconclusiveEvidence("no series")
        med = np.array([robust_mean(e.values) for e in evidence])
        if med.max() - med.min() <= rule.delta:
            raise InconclusiveEvidence("all series within the noise band")
        sign = SPECIFIC_ADJECTIVES[cmd.adjective]
        k = int(np.argmax(sign * med))
        return evidence[k].location
    if cmd.task_kind == "ID":
        hits = [e for e in evidence if e.confirmed_at is not None]
        if not hits:
            return None
        return min(hits, key=lambda e: (e.t, e.index)).confirmed_at
    if cmd.task_kind in ("State", "Surveillance"):
        if rule.threshold is None:
            raise ValueError("threshold rule needs a threshold")
        return [e.location for e in evidence if m_of_n(e.values, rule.threshold, rule.m, rule.n)]
    raise ValueError(f"nothing to decide for {cmd.task_kind}")


def rank_sum_decision(evidence_by_modality: Sequence[Sequence[SeriesEvidence]],
                      adjectives: Sequence[str]) -> Point2:
    """Joint choice over locations sensed in every modality: smallest rank sum.

    Ranks are 0 for the best location in a modality; ties go to the better
    rank in the first modality, then to the first location.
    """
    n = len(evidence_by_modality[0])
    ranks = []
    for ev, adj in zip(evidence_by_modality, adjectives):
        if len(ev) != n:
            raise ValueError("every modality must cover the same locations")
        sign = SPECIFIC_ADJECTIVES[adj]
        med = np.array([robust_mean(e.values) for e in ev])
        order = np.argsort(-sign * med, kind="stable")
        r = np.empty(n, dtype=int)
        r[order] = np.arange(n)
        ranks.append(r)
    total = np.sum(ranks, axis=0)
    k = min(range(n), key=lambda i: (total[i], ranks[0][i], i))
    return evidence_by_modality[0][k].location


# --- execution --------------------------------------------------------------------

class MissionLog:
    """Line-oriented JSON events; durations add up to the mission clock."""

    def __init__(self):
        self.events: list[dict] = []

    def add(self, event: str, t: float, duration: float, **kw):
        rec = {"event": event, "t": round(t, 6), "duration": round(duration, 6)}
        rec.update({k: _jsonable(v) for k, v in kw.items()})
        self.events.append(rec)

    def total(self) -> float:
        return sum(e["duration"] for e in self.events)

    def to_jsonl(self) -> str:
        return "".join(json.dumps(e, sort_keys=True) + "\n" for e in self.events)


def _jsonable(v):
    if isinstance(v, Point2):
        return [round(v.x, 6), round(v.y, 6)]
    if isinstance(v, float):
        return round(v, 6)
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


@dataclass(frozen=True)
class ExecSettings:
    sense_rate: float = 2.0
    frame_time: float = 1.0
    release_time: float = 2.0
    drop_sigma: float = 0.0757
    decision_latency: float = 2.0
    noise_sd: dict = field(default_factory=dict)
    fail_swap_at_phase: int | None = None


@dataclass
class ExecutionResult:
    evidence: dict = field(default_factory=dict)
    answers: dict = field(default_factory=dict)
    deliveries: list = field(default_factory=list)
    sorties: int = 0
    failed: bool = False
    needs_human: bool = False
    failure_reason: str = ""
    failed_phase: int | None = None
    phases_done: int = 0


def _clock_step(log: MissionLog, drone: Drone, name: str, fn, **kw):
    t0 = drone.clock
    out = fn()
    log.add(name, t0, drone.clock - t0, battery=drone.battery_remaining, **kw)
    return out


def _skip_to_landing(steps, k):
    """Index of the phase's final ReturnAndLand at or after ``k``."""
    phase = steps[k].phase
    j = k
    while j + 1 < len(steps) and steps[j + 1].phase == phase:
        j += 1
    return j


def execute(p: MissionPlan, world: World, drone: Drone, station: Station, rng: np.random.Generator,
            oracle: OracleParams, settings: ExecSettings, log: MissionLog,
            rules: Sequence[DecisionRule] | None = None,
            phase_decider: Callable | None = None) -> ExecutionResult:
    """Run a plan through the drone and station models.

    Battery exhaustion, misaligned landings and failed swaps stop the run and
    mark it as needing a human.  ``phase_decider(phase, evidence)`` is called
    after each phase that gathered evidence; its result is stored as that
    phase's answer (and used by later ``from_phase`` steps).
    """
    res = ExecutionResult()
    steps = p.steps
    validate_plan(p)
    k = 0
    while k < len(steps):
        s = steps[k]
        try:
            _run_step(s, p, world, drone, station, rng, oracle, settings, log, res)
        except (BatteryExhausted, Unreachable, MisalignedLanding, NotAligned, ModuleUnavailable, PlanError) as e:
            res.failed = True
            res.needs_human = True
            res.failure_reason = f"{type(e).__name__}: {e}"
            res.failed_phase = s.phase
            log.add("failure", drone.clock, 0.0, reason=res.failure_reason, phase=s.phase)
            return res
        if isinstance(s, CaptureAt) and p.stop_at_first and p.stop_at_first[s.phase]:
            if res.evidence[s.phase][-1].confirmed_at is not None:
                # confirmed: drop the remaining visits and fly home
                j = _skip_to_landing(steps, k)
                if j > k:
                    k = j
                    continue
        if k + 1 == len(steps) or steps[k + 1].phase != s.phase:
            if res.evidence.get(s.phase) and phase_decider is not None:
                t0 = drone.clock
                drone.clock += settings.decision_latency
                ans = phase_decider(s.phase, res.evidence[s.phase])
                res.answers[s.phase] = ans
                log.add("decide", t0, settings.decision_latency, phase=s.phase,
                        answer=ans if not isinstance(ans, Exception) else repr(ans))
            res.phases_done = s.phase + 1
        k += 1
    return res


def _target(s, res: ExecutionResult) -> Point2:
    if s.target is not None:
        return s.target
    ans = res.answers.get(s.from_phase)
    if not isinstance(ans, Point2):
        raise PlanError(f"phase {s.from_phase} produced no location")
    return ans


def _run_step(s, p, world, drone: Drone, station: Station, rng, oracle, st: ExecSettings,
              log: MissionLog, res: ExecutionResult):
    if isinstance(s, EquipModule):
        if drone.attached is not None and drone.attached.name == s.module and drone.payload == s.payload:
            log.add("equip", drone.clock, 0.0, module=s.module, note="already attached")
            return
        req = SwapRequest(drone.attached.name if drone.attached else None, s.module, s.payload)
        out = _clock_step(log, drone, "equip", lambda: swap_module(station, drone, req), module=s.module)
        if not out.success:
            raise NotAligned(f"equip failed: {out.reason}")
    elif isinstance(s, Takeoff):
        _clock_step(log, drone, "takeoff", lambda: drone.takeoff(rng), phase=s.phase)
        res.sorties += 1
    elif isinstance(s, FlyTo):
        tgt = _target(s, res)
        _clock_step(log, drone, "fly", lambda: drone.navigate_to(tgt, rng), target=tgt, phase=s.phase)
    elif isinstance(s, SenseAt):
        noise = st.noise_sd.get(s.kind, 0.0)
        series = _clock_step(log, drone, "sense", lambda: drone.sense_at(world, s.target, s.kind, s.duration,
                                                                          st.sense_rate, noise, rng),
                             kind=s.kind, target=s.target, phase=s.phase)
        values = tuple(v for *_, v in series)
        res.evidence.setdefault(s.phase, []).append(SeriesEvidence(s.target, values, s.index))
    elif isinstance(s, CaptureAt):
        def capture():
            for _ in range(s.frames):
                drone.hover(st.frame_time)
                det = close_up_confirm(drone.true_pose.xy, s.query, world, oracle, rng, drone.clock)
                if det is not None:
                    return det.bbox.center
            return None
        hit = _clock_step(log, drone, "capture", capture, target=s.target, phase=s.phase)
        res.evidence.setdefault(s.phase, []).append(CaptureEvidence(s.target, drone.clock, hit, s.index))
    elif isinstance(s, Deliver):
        tgt = _target(s, res)

        def release():
            if drone.payload is None:
                raise PlanError("nothing to deliver")
            drone.hover(st.release_time)
            d = rng.normal(0.0, st.drop_sigma, 2) if st.drop_sigma > 0 else np.zeros(2)
            spot = Point2(drone.true_pose.xy.x + float(d[0]), drone.true_pose.xy.y + float(d[1]))
            item = drone.payload
            drone.payload = None
            if station.attached_unit is not None:
                station.attached_unit.payload = None
            return item, spot
        item, spot = _clock_step(log, drone, "deliver", release, target=tgt, phase=s.phase)
        res.deliveries.append((s.phase, item, tgt, spot))
    elif isinstance(s, ReturnAndLand):
        _clock_step(log, drone, "return", lambda: drone.navigate_to(station.location, rng), phase=s.phase)
        out = _clock_step(log, drone, "land", lambda: land(drone, station, rng),
                          phase=s.phase)
        if not out.aligned:
            log.add("misaligned", drone.clock, 0.0, offset=out.sample.offset, yaw=out.sample.yaw_error)
        if s.recharge:
            if not out.aligned:
                raise MisalignedLanding("cannot swap battery on a misaligned drone")
            drone.recharge()
            log.add("recharge", drone.clock, 0.0, battery=drone.battery_remaining)
    elif isinstance(s, SwapModule):
        if st.fail_swap_at_phase is not None and s.phase == st.fail_swap_at_phase:
            raise MisalignedLanding("injected swap failure")
        if not station.drone_aligned:
            raise MisalignedLanding("drone landed off-center; swap impossible")
        out = _clock_step(log, drone, "swap", lambda: swap_module(station, drone, s.request),
                          detach=s.request.detach, attach=s.request.attach)
        if not out.success:
            raise NotAligned(f"swap failed: {out.reason}")
    else:
        raise PlanError(f"unknown step {s!r}")
