"""Emergency-department patient flow with physicians as individual agents.

Patients arrive, are triaged (or go straight to a trauma bay), wait for a bed,
and are then seen repeatedly by one physician at a time. Imaging orders are
released one per completed evaluation; while an order is outstanding the
patient cannot be seen. After the last evaluation and last read the patient
gets a disposition and leaves once the departure delay has elapsed.

All per-patient random draws are taken when the patient arrives, in arrival
order, from purpose-named streams. Two runs that differ only in imaging
reductions or order-count tables therefore see the same patients with the
same service times.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Callable, Optional

from .config import INTERACTIONS_PER_ESI, RunConfig
from .kernel import EventCalendar, EventRecord, run_until
from .stochastic import MINUTES_PER_DAY, CategoricalDist, fork_stream

HIGH_SEVERITY = (1, 2)
TRAUMA_POD_ID = 0
STREAMS = (
    "arrivals", "esi", "bypass", "triage", "orders", "images",
    "service", "charting", "routing", "imaging", "disposition",
)


class NoPhysicianError(RuntimeError):
    pass


class UnstaffedPodError(RuntimeError):
    pass


class UndefinedInteractionError(ValueError):
    pass


class IncompleteTrailError(ValueError):
    pass


class Kind(IntEnum):
    SHIFT_START = 0
    SHIFT_END = 1
    ARRIVAL = 2
    TRIAGE_DONE = 3
    EVAL_DONE = 4
    CHART_DONE = 5
    HANDOFF_DONE = 6
    IMAGE_READ = 7
    DEPARTURE = 8


KIND_NAMES = {k.value: k.name.lower() for k in Kind}


@dataclass(slots=True)
class ImagingOrder:
    patient: int
    placed_at: float
    begin_at: float
    end_at: float
    read_at: float
    image_count: int = 1

    @property
    def order_to_begin(self) -> float:
        return self.begin_at - self.placed_at

    @property
    def begin_to_end(self) -> float:
        return self.end_at - self.begin_at

    @property
    def end_to_read(self) -> float:
        return self.read_at - self.end_at


@dataclass(slots=True, eq=False)
class Patient:
    id: int
    esi: int
    arrival: float
    interactions_total: int
    order_plan: int
    # pre-drawn randomness
    eval_u: list
    chart_u: list
    route_u: list
    imaging_u: list
    image_counts: list
    triage_u: float
    bypass_u: float
    dispo_u: float
    delay_u: float
    triage_done: Optional[float] = None
    bed_assigned: Optional[float] = None
    first_eval_start: Optional[float] = None
    disposition: Optional[float] = None
    departure: Optional[float] = None
    disposition_kind: Optional[str] = None
    orders: list = field(default_factory=list)
    interactions_done: int = 0
    assigned_physician: Optional[int] = None
    pod: Optional[int] = None
    bypass: bool = False
    eligible: bool = False
    eligible_since: float = 0.0
    face_time: float = 0.0
    handoffs: int = 0

    @property
    def interactions_remaining(self) -> int:
        return self.interactions_total - self.interactions_done

    @property
    def time_in_ed(self) -> float:
        return self.departure - self.bed_assigned


@dataclass(slots=True, eq=False)
class Physician:
    id: int
    pod: int
    shift_start: float
    shift_end: float
    can_take_high_severity: bool
    panel: dict = field(default_factory=dict)
    location: str = "off_shift"  # at_workstation | with_patient | off_shift
    busy: bool = False
    on_shift: bool = False
    leaving: bool = False
    current: Optional[Patient] = None
    pending_orders: list = field(default_factory=list)
    overhead: float = 0.0
    face_time: float = 0.0


@dataclass(slots=True, eq=False)
class Pod:
    id: int
    capacity: int
    accepts: frozenset
    trauma_capable: bool
    physician_pod: int
    occupied: int = 0

    @property
    def free(self) -> int:
        return self.capacity - self.occupied


@dataclass(frozen=True, slots=True)
class FlowRecord:
    patient: int
    esi: int
    time_in_ed: float
    bed_to_disposition: float
    disposition_to_departure: float
    orders: int
    waiting_room: float
    face_time: float
    bed_assigned: float
    departure: float


def collect_patient_metrics(p: Patient) -> FlowRecord:
    chain = (p.arrival, p.triage_done, p.bed_assigned, p.first_eval_start, p.disposition, p.departure)
    if any(t is None for t in chain) or any(a > b for a, b in zip(chain, chain[1:])):
        raise IncompleteTrailError(f"patient {p.id} has a broken timestamp chain {chain}")
    return FlowRecord(
        patient=p.id,
        esi=p.esi,
        time_in_ed=p.departure - p.bed_assigned,
        bed_to_disposition=p.disposition - p.bed_assigned,
        disposition_to_departure=p.departure - p.disposition,
        orders=len(p.orders),
        waiting_room=p.bed_assigned - p.triage_done,
        face_time=p.face_time,
        bed_assigned=p.bed_assigned,
        departure=p.departure,
    )


class EDModel:
    """One replication of the ED. Build, call :meth:`run`, read ``records``."""

    def __init__(
        self,
        config: RunConfig,
        replication: int = 0,
        *,
        trace: Optional[Callable[[EventRecord], None]] = None,
        audit: bool = False,
    ):
        self.cfg = cfg = config
        self.replication = replication
        self.trace = trace
        self.audit = audit
        seed = cfg.replication.seed
        self.streams = {name: fork_stream(seed, name, replication) for name in STREAMS}
        self.calendar = EventCalendar()

        self.profile = cfg.arrival_profile()
        self.esi_dist = cfg.esi_dist()
        self.order_dists = {e: cfg.order_count_dist(e) for e in INTERACTIONS_PER_ESI}
        self.image_dist: CategoricalDist = cfg.image_count_dist()
        self.r_otb = cfg.scenario.r_otb
        self.r_etr = cfg.scenario.r_etr

        self.pods: dict[int, Pod] = {}
        for ps in cfg.pods:
            self.pods[ps.id] = Pod(ps.id, ps.beds, frozenset(ps.accepts), ps.trauma_capable, ps.id)
        if cfg.trauma_bays > 0:
            self.pods[TRAUMA_POD_ID] = Pod(TRAUMA_POD_ID, cfg.trauma_bays, frozenset({1}), True, cfg.trauma_pod)
        self._pods_for_esi = {
            e: [p for p in self.pods.values() if e in p.accepts] for e in INTERACTIONS_PER_ESI
        }
        self._pod_high = {ps.id: ps.high_severity for ps in cfg.pods}

        self.waiting: dict[int, list] = {e: [] for e in INTERACTIONS_PER_ESI}
        self.patients: dict[int, Patient] = {}
        self.physicians: dict[int, Physician] = {}
        self.roster: dict[int, list[Physician]] = {ps.id: [] for ps in cfg.pods}
        self.records: list[FlowRecord] = []
        self.censored = 0
        self.handlers = {
            Kind.SHIFT_START: self._on_shift_start,
            Kind.SHIFT_END: self._on_shift_end,
            Kind.ARRIVAL: self._on_arrival,
            Kind.TRIAGE_DONE: self._on_triage_done,
            Kind.EVAL_DONE: self._on_eval_done,
            Kind.CHART_DONE: self._on_chart_done,
            Kind.HANDOFF_DONE: self._on_handoff_done,
            Kind.IMAGE_READ: self._on_image_read,
            Kind.DEPARTURE: self._on_departure,
        }
        rp = cfg.replication
        self.measure_start = rp.warmup
        self.measure_end = rp.warmup + rp.horizon
        self.end_time = self.measure_end + rp.drain

    @property
    def now(self) -> float:
        return self.calendar.clock

    # -- setup -------------------------------------------------------------

    def _build_shifts(self) -> None:
        days = int(math.ceil(self.end_time / MINUTES_PER_DAY)) + 1
        specs = self.cfg.shifts
        pid = 0
        for day in range(-1, days):
            base = day * MINUTES_PER_DAY
            for sh in specs:
                start = base + sh.start * 60.0
                end = start + sh.length_hours * 60.0
                if end <= 0 or start > self.end_time:
                    continue
                for _ in range(sh.physicians):
                    ph = Physician(pid, sh.pod, start, end, self._pod_high[sh.pod])
                    self.physicians[pid] = ph
                    self.calendar.schedule(max(start, 0.0), Kind.SHIFT_START, pid)
                    if end <= self.end_time:
                        self.calendar.schedule(end, Kind.SHIFT_END, pid)
                    pid += 1

    def run(self) -> "EDModel":
        self._build_shifts()
        first = self.profile.next_arrival(0.0, self.streams["arrivals"])
        self.calendar.schedule(first, Kind.ARRIVAL, 0)
        run_until(self.calendar, self._dispatch, self.end_time, trace=self.trace)
        self.censored = sum(
            1
            for p in self.patients.values()
            if p.departure is None
            and p.bed_assigned is not None
            and self.measure_start <= p.bed_assigned < self.measure_end
        )
        return self

    def _dispatch(self, rec: EventRecord) -> None:
        self.handlers[rec.kind](rec.subject)
        if self.audit:
            self.check_invariants()

    # -- patients ------------------------------------------------------------

    def _new_patient(self, pid: int) -> Patient:
        s = self.streams
        esi = self.esi_dist.ppf(s["esi"].random())
        plan = self.order_dists[esi].ppf(s["orders"].random())
        img = s["images"].randoms(3)
        p = Patient(
            id=pid,
            esi=esi,
            arrival=self.now,
            interactions_total=INTERACTIONS_PER_ESI[esi],
            order_plan=plan,
            eval_u=s["service"].randoms(4),
            chart_u=s["charting"].randoms(4),
            route_u=s["routing"].randoms(4),
            imaging_u=s["imaging"].randoms(9),
            image_counts=[self.image_dist.ppf(u) for u in img],
            triage_u=s["triage"].random(),
            bypass_u=s["bypass"].random(),
            dispo_u=s["disposition"].random(),
            delay_u=s["disposition"].random(),
        )
        self.patients[pid] = p
        return p

    def _on_arrival(self, pid: int) -> None:
        p = self._new_patient(pid)
        nxt = self.profile.next_arrival(self.now, self.streams["arrivals"])
        self.calendar.schedule(nxt, Kind.ARRIVAL, pid + 1)
        if p.esi == 1 and p.bypass_u < self.cfg.trauma_bypass:
            p.bypass = True
            p.triage_done = self.now
            self.try_assign_bed(p)
        else:
            self.calendar.schedule(self.now + self.cfg.triage.ppf(p.triage_u), Kind.TRIAGE_DONE, pid)

    def _on_triage_done(self, pid: int) -> None:
        p = self.patients[pid]
        p.triage_done = self.now
        self.try_assign_bed(p)

    def _pick_pod(self, esi: int, bypass: bool = False) -> Optional[Pod]:
        best, best_key = None, None
        for pod in self._pods_for_esi[esi]:
            # trauma bays are kept for patients who skipped triage
            if pod.id == TRAUMA_POD_ID and not bypass:
                continue
            if pod.occupied < pod.capacity:
                # least-capable pod first keeps high-acuity beds open
                key = (len(pod.accepts), -pod.free, pod.id)
                if best_key is None or key < best_key:
                    best, best_key = pod, key
        return best

    def try_assign_bed(self, p: Patient) -> bool:
        pod = self._pick_pod(p.esi, p.bypass)
        if pod is None:
            heapq.heappush(self.waiting[p.esi], (p.arrival, p.id))
            return False
        self._seat(p, pod)
        return True

    def _seat(self, p: Patient, pod: Pod) -> None:
        pod.occupied += 1
        p.pod = pod.id
        p.bed_assigned = self.now
        ph = self.select_physician(p, pod)
        ph.panel[p.id] = p
        p.assigned_physician = ph.id
        p.eligible = True
        p.eligible_since = self.now
        self._poke(ph)

    def select_physician(self, p: Patient, pod: Pod) -> Physician:
        high = p.esi in HIGH_SEVERITY
        best = None
        for ph in self.roster[pod.physician_pod]:
            if ph.leaving or (high and not ph.can_take_high_severity):
                continue
            if best is None or (len(ph.panel), ph.id) < (len(best.panel), best.id):
                best = ph
        if best is None:
            raise NoPhysicianError(f"no physician on shift for pod {pod.id} at t={self.now:.1f}")
        return best

    def _poke(self, ph: Physician) -> None:
        if ph.on_shift and not ph.busy:
            self._physician_next(ph)

    # -- physician workflow ----------------------------------------------------

    def _best_eligible(self, ph: Physician, exclude: Optional[Patient] = None) -> Optional[Patient]:
        best = None
        for p in ph.panel.values():
            if not p.eligible or p is exclude:
                continue
            if best is None or (p.esi, p.eligible_since, p.id) < (best.esi, best.eligible_since, best.id):
                best = p
        return best

    def _physician_next(self, ph: Physician) -> None:
        if ph.leaving:
            self._handoff(ph)
            return
        if ph.overhead > 0:
            ph.busy = True
            ph.location = "at_workstation"
            d, ph.overhead = ph.overhead, 0.0
            self.calendar.schedule(self.now + d, Kind.HANDOFF_DONE, ph.id)
            return
        p = self._best_eligible(ph)
        if p is None:
            ph.busy = False
            ph.location = "at_workstation"
            return
        self.run_evaluation(p, ph)

    def run_evaluation(self, p: Patient, ph: Physician) -> float:
        k = p.interactions_done + 1
        if k > p.interactions_total:
            raise UndefinedInteractionError(
                f"ESI {p.esi} has {p.interactions_total} interactions, asked for #{k}"
            )
        dur = self.cfg.interactions[p.esi][k - 1].ppf(p.eval_u[k - 1])
        p.eligible = False
        if k == 1:
            p.first_eval_start = self.now
        p.face_time += dur
        ph.face_time += dur
        ph.busy = True
        ph.location = "with_patient"
        ph.current = p
        self.calendar.schedule(self.now + dur, Kind.EVAL_DONE, ph.id)
        return dur

    def _on_eval_done(self, phid: int) -> None:
        ph = self.physicians[phid]
        p = ph.current
        ph.current = None
        p.interactions_done += 1
        k = p.interactions_done
        if k <= p.order_plan:
            ph.pending_orders.append(p)
        elif k < p.interactions_total:
            p.eligible = True
            p.eligible_since = self.now
        else:
            self._dispose(p)

        if ph.leaving:
            self._handoff(ph)
            return
        if k >= 2 and p.route_u[k - 1] < self.cfg.chain_probability:
            nxt = self._best_eligible(ph, exclude=p)
            if nxt is not None:
                self.run_evaluation(nxt, ph)
                return
        self._to_workstation(ph, self.cfg.charting.ppf(p.chart_u[k - 1]))

    def _to_workstation(self, ph: Physician, charting: float) -> None:
        self._place_pending_orders(ph)
        ph.busy = True
        ph.location = "at_workstation"
        self.calendar.schedule(self.now + charting, Kind.CHART_DONE, ph.id)

    def _on_chart_done(self, phid: int) -> None:
        ph = self.physicians[phid]
        ph.busy = False
        self._physician_next(ph)

    def _on_handoff_done(self, phid: int) -> None:
        ph = self.physicians[phid]
        ph.busy = False
        self._physician_next(ph)

    # -- imaging -------------------------------------------------------------

    def _place_pending_orders(self, ph: Physician) -> None:
        for p in ph.pending_orders:
            self.place_order(p)
        ph.pending_orders.clear()

    def place_order(self, p: Patient) -> ImagingOrder:
        idx = len(p.orders)
        placed = self.now
        if p.orders:
            placed = max(placed, p.orders[-1].placed_at + self.cfg.order_separation)
        order = self.imaging_cycle(p, idx, placed)
        p.orders.append(order)
        self.calendar.schedule(order.read_at, Kind.IMAGE_READ, p.id)
        return order

    def imaging_cycle(self, p: Patient, idx: int, placed: float) -> ImagingOrder:
        im = self.cfg.imaging
        s = im.esi_scale[p.esi]
        u = p.imaging_u[3 * idx: 3 * idx + 3]
        begin = placed + (1.0 - self.r_otb) * s * im.order_to_begin.ppf(u[0])
        end = begin + s * im.begin_to_end.ppf(u[1])
        read = end + (1.0 - self.r_etr) * s * im.end_to_read.ppf(u[2])
        return ImagingOrder(p.id, placed, begin, end, read, p.image_counts[idx])

    def _on_image_read(self, pid: int) -> None:
        p = self.patients[pid]
        if p.interactions_done < p.interactions_total:
            p.eligible = True
            p.eligible_since = self.now
            self._poke(self.physicians[p.assigned_physician])
        else:
            self._dispose(p)

    # -- disposition and departure ---------------------------------------------

    def _dispose(self, p: Patient) -> None:
        d = self.cfg.disposition
        p.disposition = self.now
        ph = self.physicians[p.assigned_physician]
        ph.panel.pop(p.id, None)
        admit = d.admit_probability[p.esi]
        if p.dispo_u < admit:
            p.disposition_kind, dist = "admit", d.admit_delay
        elif p.dispo_u < admit + d.transfer_probability[p.esi]:
            p.disposition_kind, dist = "transfer", d.discharge_delay
        else:
            p.disposition_kind, dist = "discharge", d.discharge_delay
        delay = d.esi_scale[p.esi] * dist.ppf(p.delay_u)
        self.calendar.schedule(self.now + delay, Kind.DEPARTURE, p.id)

    def _on_departure(self, pid: int) -> None:
        p = self.patients[pid]
        p.departure = self.now
        pod = self.pods[p.pod]
        pod.occupied -= 1
        if self.measure_start <= p.bed_assigned < self.measure_end:
            self.records.append(collect_patient_metrics(p))
        if pod.id == TRAUMA_POD_ID:
            queue = self.waiting[1]
            bypassers = [entry for entry in queue if self.patients[entry[1]].bypass]
            if bypassers:
                entry = min(bypassers)
                queue.remove(entry)
                heapq.heapify(queue)
                self._seat(self.patients[entry[1]], pod)
            return
        for esi in (1, 2, 3, 4, 5):
            if esi in pod.accepts and self.waiting[esi]:
                _, wid = heapq.heappop(self.waiting[esi])
                self._seat(self.patients[wid], pod)
                break

    # -- shifts ----------------------------------------------------------------

    def _on_shift_start(self, phid: int) -> None:
        ph = self.physicians[phid]
        ph.on_shift = True
        ph.location = "at_workstation"
        self.roster[ph.pod].append(ph)
        self._physician_next(ph)

    def _on_shift_end(self, phid: int) -> None:
        ph = self.physicians[phid]
        ph.leaving = True
        if not ph.busy:
            self._handoff(ph)

    def _handoff(self, ph: Physician) -> None:
        """Hand the panel to arriving physicians if any overlap, else to whoever stays."""
        self._place_pending_orders(ph)
        self.shift_change(ph)
        ph.on_shift = False
        ph.busy = False
        ph.location = "off_shift"
        self.roster[ph.pod].remove(ph)

    def shift_change(self, ph: Physician) -> list[Physician]:
        stay = [q for q in self.roster[ph.pod] if q is not ph and not q.leaving]
        arriving = [q for q in stay if q.shift_start > ph.shift_start]
        pool = arriving or stay
        touched = []
        for pid in sorted(ph.panel):
            p = ph.panel[pid]
            high = p.esi in HIGH_SEVERITY
            best = None
            for q in pool:
                if high and not q.can_take_high_severity:
                    continue
                if best is None or (len(q.panel), q.id) < (len(best.panel), best.id):
                    best = q
            if best is None:
                raise UnstaffedPodError(f"pod {ph.pod} has nobody to take patient {pid} at t={self.now:.1f}")
            best.panel[pid] = p
            best.overhead += self.cfg.handoff_minutes
            p.assigned_physician = best.id
            p.handoffs += 1
            if best not in touched:
                touched.append(best)
        ph.panel.clear()
        for q in touched:
            self._poke(q)
        return touched

    # -- checks ----------------------------------------------------------------

    def check_invariants(self) -> None:
        occupied = {pid: 0 for pid in self.pods}
        for p in self.patients.values():
            if p.bed_assigned is not None and p.departure is None:
                occupied[p.pod] += 1
        for pod in self.pods.values():
            assert pod.occupied == occupied[pod.id], f"bed count drift in pod {pod.id}"
            assert 0 <= pod.occupied <= pod.capacity, f"pod {pod.id} over capacity"
        seen = set()
        for ph in self.physicians.values():
            for pid, p in ph.panel.items():
                assert p.assigned_physician == ph.id, f"patient {pid} panel mismatch"
                assert pid not in seen, f"patient {pid} on two panels"
                seen.add(pid)
            if not ph.on_shift:
                assert not ph.panel, f"off-shift physician {ph.id} still has patients"
            if ph.current is not None:
                assert ph.location == "with_patient"
