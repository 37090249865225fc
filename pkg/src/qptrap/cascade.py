"""Monte Carlo phonon transport with film downconversion.

Phonons fly ballistically inside the substrate box. At the backside they can
escape into the copper mount; at the side walls they reflect; at the top
surface they may break pairs in a qubit, be absorbed by a film, or reflect.
Films with a gap downconvert absorbed phonons (pair breaking, relaxation,
recombination) and re-emit the products into the substrate; normal films
thermalize them.

One Monte Carlo packet is one injector tunnelling event together with all
phonons it releases and their descendants. Each packet draws from its own
counter-based random stream, so the per-packet ledgers, and every total
derived from them, are identical for any chunking or worker count.
"""
from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from numba import njit

from .chip import ChipLayout, FilmMaterial
from .injector import PhononSource, sample_pair
from .rng import PacketStream, stream_key_nb, uniform_at

# event codes
REFLECT_TOP, REFLECT_BOTTOM, REFLECT_SIDE = 0, 1, 2
QUBIT, DOWNCONVERT, THERMALIZE, ESCAPE, DROP, STUCK, RETAIN = 3, 4, 5, 6, 7, 8, 9
EVENT_NAMES = {
    REFLECT_TOP: "reflect_top",
    REFLECT_BOTTOM: "reflect_bottom",
    REFLECT_SIDE: "reflect_side",
    QUBIT: "qubit",
    DOWNCONVERT: "downconvert",
    THERMALIZE: "thermalize",
    ESCAPE: "escape",
    DROP: "drop",
    STUCK: "stuck",
    RETAIN: "retain",
}

# misc ledger columns
_ESC, _DROP, _STUCK, _PATH, _BOUNCES, _PHONONS = 0, 1, 2, 3, 4, 5
_N_MISC = 6

N_BOUNCE_BINS = 256
_STACK_CAP = 4096
_TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class PhononPacket:
    energy: float  # µeV
    position: tuple[float, float, float]  # mm
    direction: tuple[float, float, float]
    weight: float = 1.0

    def __post_init__(self):
        if not self.energy > 0:
            raise ValueError("packet energy must be positive")
        if not self.weight > 0:
            raise ValueError("packet weight must be positive")
        norm = math.sqrt(sum(d * d for d in self.direction))
        if abs(norm - 1.0) > 1e-12:
            raise ValueError(f"direction must be a unit vector (|d| = {norm})")


@dataclass(frozen=True)
class CascadeConfig:
    n_packets: int = 100_000
    seed: int = 1
    track_floor: float = 500.0  # µeV
    max_bounces: int = 10_000
    chunk_size: int = 2048
    workers: int = 1
    keep_per_packet: bool = True

    def __post_init__(self):
        if self.n_packets < 1:
            raise ValueError("n_packets must be >= 1")
        if self.track_floor < 0:
            raise ValueError("track_floor must be >= 0")
        if self.max_bounces < 1 or self.chunk_size < 1 or self.workers < 1:
            raise ValueError("max_bounces, chunk_size and workers must be >= 1")

    def check_against(self, layout: ChipLayout) -> None:
        if layout.qubits:
            limit = 2 * min(q.nanowire_gap for q in layout.qubits)
            if not self.track_floor < limit:
                raise ValueError(
                    f"track_floor {self.track_floor} µeV would drop phonons able to break "
                    f"pairs in the qubits (limit {limit} µeV)"
                )


class Event(NamedTuple):
    packet_id: int
    event: str
    index: int  # material or qubit index, -1 if none
    energy: float
    x: float
    y: float


# ---------------------------------------------------------------------------
# compiled kernels


@njit(cache=True, nogil=True)
def _downconvert(energy, gap, reemit_prob, key, ctr, out):
    """One pair-breaking step in a film; writes re-emitted energies to ``out``.

    Returns ``(n_out, retained, ctr)``.
    """
    half = 0.5 * energy - gap
    out[0] = half
    out[1] = half
    n = 2
    retained = 0.0
    if uniform_at(key, ctr) < reemit_prob:
        out[2] = 2.0 * gap
        n = 3
    else:
        retained = 2.0 * gap
    ctr += 1
    return n, retained, ctr


@njit(cache=True, nogil=True)
def _film_index(x, y, rects, region_material):
    for i in range(rects.shape[0]):
        if rects[i, 0] <= x < rects[i, 2] and rects[i, 1] <= y < rects[i, 3]:
            return region_material[i]
    return -1


@njit(cache=True, nogil=True)
def _log(log, n, pid, code, idx, e, x, y):
    if n < log.shape[0]:
        log[n, 0] = pid
        log[n, 1] = code
        log[n, 2] = idx
        log[n, 3] = e
        log[n, 4] = x
        log[n, 5] = y
    return n + 1


@njit(cache=True, nogil=True)
def _transport(
    energy, x, y, z, dx, dy, dz, path, key, ctr, pid,
    half_w, half_h, thick, specular, back_p,
    rects, region_material, mat_gap, mat_absorb, mat_reemit,
    qubit_pos, qubit_r2, qubit_thr,
    floor, max_bounces,
    acc_q, acc_qpath, qmin, acc_m, acc_misc, hist,
    stack, log, log_n, do_log,
):
    """Trace one phonon and all phonons re-emitted from it.

    ``path`` is the distance already travelled since injection; qubit hits
    accumulate ``energy * path`` so mean arrival delays can be formed.
    Ledgers are accumulated in place; returns the advanced counter and the
    event-log fill level.
    """
    nq = qubit_pos.shape[0]
    n_stack = 0
    cascade_buf = np.empty(3)
    first = True
    while True:
        if first:
            first = False
        else:
            if n_stack == 0:
                break
            n_stack -= 1
            energy = stack[n_stack, 0]
            x = stack[n_stack, 1]
            y = stack[n_stack, 2]
            path = stack[n_stack, 3]
            z = thick
            # isotropic into the lower half space
            cz = 1.0 - uniform_at(key, ctr)
            ph = _TWO_PI * uniform_at(key, ctr + 1)
            ctr += 2
            sz = math.sqrt(max(0.0, 1.0 - cz * cz))
            dx = sz * math.cos(ph)
            dy = sz * math.sin(ph)
            dz = -cz

        bounces = 0
        alive = True
        while alive:
            # distance to the next wall along each axis
            tx = ((half_w if dx > 0 else -half_w) - x) / dx if dx != 0.0 else np.inf
            ty = ((half_h if dy > 0 else -half_h) - y) / dy if dy != 0.0 else np.inf
            tz = ((thick if dz > 0 else 0.0) - z) / dz if dz != 0.0 else np.inf
            if tx < 0.0:
                tx = 0.0
            if ty < 0.0:
                ty = 0.0
            if tz < 0.0:
                tz = 0.0
            if tz <= tx and tz <= ty:
                t = tz
                axis = 2
            elif tx <= ty:
                t = tx
                axis = 0
            else:
                t = ty
                axis = 1
            x += t * dx
            y += t * dy
            z += t * dz
            acc_misc[_PATH] += t
            path += t
            x = min(max(x, -half_w), half_w)
            y = min(max(y, -half_h), half_h)
            z = min(max(z, 0.0), thick)
            bounces += 1
            if bounces > max_bounces:
                acc_misc[_STUCK] += energy
                if do_log:
                    log_n = _log(log, log_n, pid, STUCK, -1, energy, x, y)
                break

            # inward normal of the wall that was hit
            nx = 0.0
            ny = 0.0
            nz = 0.0
            if axis == 2:
                if dz < 0.0:
                    z = 0.0
                    if uniform_at(key, ctr) < back_p:
                        ctr += 1
                        acc_misc[_ESC] += energy
                        if do_log:
                            log_n = _log(log, log_n, pid, ESCAPE, -1, energy, x, y)
                        alive = False
                        break
                    ctr += 1
                    nz = 1.0
                    code = REFLECT_BOTTOM
                else:
                    z = thick
                    hit_qubit = -1
                    for q in range(nq):
                        ddx = x - qubit_pos[q, 0]
                        ddy = y - qubit_pos[q, 1]
                        if ddx * ddx + ddy * ddy <= qubit_r2[q] and energy >= qubit_thr[q]:
                            hit_qubit = q
                            break
                    if hit_qubit >= 0:
                        acc_q[hit_qubit] += energy
                        acc_qpath[hit_qubit] += energy * path
                        if energy < qmin[hit_qubit]:
                            qmin[hit_qubit] = energy
                        if do_log:
                            log_n = _log(log, log_n, pid, QUBIT, hit_qubit, energy, x, y)
                        alive = False
                        break
                    m = _film_index(x, y, rects, region_material)
                    if m >= 0:
                        gap = mat_gap[m]
                        if gap == 0.0:
                            if uniform_at(key, ctr) < mat_absorb[m]:
                                ctr += 1
                                acc_m[m] += energy
                                if do_log:
                                    log_n = _log(log, log_n, pid, THERMALIZE, m, energy, x, y)
                                alive = False
                                break
                            ctr += 1
                        elif energy >= 2.0 * gap:
                            if uniform_at(key, ctr) < mat_absorb[m]:
                                ctr += 1
                                nout, retained, ctr = _downconvert(
                                    energy, gap, mat_reemit[m], key, ctr, cascade_buf
                                )
                                if do_log:
                                    log_n = _log(log, log_n, pid, DOWNCONVERT, m, energy, x, y)
                                if retained > 0.0:
                                    acc_m[m] += retained
                                    if do_log:
                                        log_n = _log(log, log_n, pid, RETAIN, m, retained, x, y)
                                for k in range(nout):
                                    e = cascade_buf[k]
                                    if e < floor or e <= 0.0:
                                        acc_misc[_DROP] += e
                                        if do_log:
                                            log_n = _log(log, log_n, pid, DROP, m, e, x, y)
                                    elif n_stack < stack.shape[0]:
                                        stack[n_stack, 0] = e
                                        stack[n_stack, 1] = x
                                        stack[n_stack, 2] = y
                                        stack[n_stack, 3] = path
                                        n_stack += 1
                                    else:
                                        acc_misc[_STUCK] += e
                                alive = False
                                break
                            ctr += 1
                    nz = -1.0
                    code = REFLECT_TOP
            elif axis == 0:
                if dx > 0:
                    x = half_w
                    nx = -1.0
                else:
                    x = -half_w
                    nx = 1.0
                code = REFLECT_SIDE
            else:
                if dy > 0:
                    y = half_h
                    ny = -1.0
                else:
                    y = -half_h
                    ny = 1.0
                code = REFLECT_SIDE

            if do_log:
                log_n = _log(log, log_n, pid, code, -1, energy, x, y)
            if uniform_at(key, ctr) < specular:
                ctr += 1
                if axis == 0:
                    dx = -dx
                elif axis == 1:
                    dy = -dy
                else:
                    dz = -dz
            else:
                # Lambertian (cosine-law) re-emission about the inward normal
                cth = math.sqrt(uniform_at(key, ctr + 1))
                ph = _TWO_PI * uniform_at(key, ctr + 2)
                ctr += 3
                sth = math.sqrt(max(0.0, 1.0 - cth * cth))
                a = sth * math.cos(ph)
                b = sth * math.sin(ph)
                if axis == 0:
                    dx, dy, dz = nx * cth, a, b
                elif axis == 1:
                    dx, dy, dz = a, ny * cth, b
                else:
                    dx, dy, dz = a, b, nz * cth
        hist[min(bounces, hist.shape[0] - 1)] += 1
        acc_misc[_BOUNCES] += bounces
        acc_misc[_PHONONS] += 1
    return ctr, log_n


@njit(cache=True, nogil=True)
def _run_chunk(
    seed, first, count, ev, gap, p_rec, min_phonon, inj_x, inj_y,
    half_w, half_h, thick, specular, back_p,
    rects, region_material, mat_gap, mat_absorb, mat_reemit,
    qubit_pos, qubit_r2, qubit_thr,
    floor, max_bounces,
    out_inj, out_q, out_qpath, out_qmin, out_m, out_misc, hist, log, do_log,
):
    buf = np.empty(256)
    stack = np.empty((_STACK_CAP, 4))
    log_n = 0
    for i in range(count):
        pid = first + i
        key = stream_key_nb(seed, pid)
        n, ctr = sample_pair(key, 0, ev, gap, p_rec, min_phonon, buf)
        for k in range(n):
            e = buf[k]
            out_inj[i] += e
            if e < floor:
                out_misc[i, _DROP] += e
                if do_log:
                    log_n = _log(log, log_n, pid, DROP, -1, e, inj_x, inj_y)
                continue
            cz = 1.0 - uniform_at(key, ctr)
            ph = _TWO_PI * uniform_at(key, ctr + 1)
            ctr += 2
            sz = math.sqrt(max(0.0, 1.0 - cz * cz))
            ctr, log_n = _transport(
                e, inj_x, inj_y, thick, sz * math.cos(ph), sz * math.sin(ph), -cz, 0.0, key, ctr, pid,
                half_w, half_h, thick, specular, back_p,
                rects, region_material, mat_gap, mat_absorb, mat_reemit,
                qubit_pos, qubit_r2, qubit_thr,
                floor, max_bounces,
                out_q[i], out_qpath[i], out_qmin[i], out_m[i], out_misc[i], hist,
                stack, log, log_n, do_log,
            )
    return log_n


# ---------------------------------------------------------------------------
# Python-facing operations


def _geometry_args(layout: ChipLayout):
    a = layout.arrays
    return (
        layout.width / 2, layout.height / 2, layout.substrate_thickness,
        layout.surface_specularity, layout.backside_absorb_prob,
        a.rects, a.region_material, a.mat_gap, a.mat_absorb, a.mat_reemit,
        a.qubit_pos, a.qubit_radius2, a.qubit_threshold,
    )


def downconvert(energy: float, film: FilmMaterial, stream: PacketStream) -> tuple[list[float], float]:
    """One pair-breaking cascade step of a phonon absorbed in ``film``.

    Returns the re-emitted phonon energies (two relaxation phonons of
    ``energy/2 - gap``, plus a ``2*gap`` recombination phonon when
    recombination fires) and the energy retained in the film. ``stream`` is
    advanced in place.
    """
    assert film.gap > 0, "normal films thermalize; they do not downconvert"
    assert energy >= 2 * film.gap, "phonon cannot break a pair in this film"
    out = np.empty(3)
    n, retained, ctr = _downconvert(
        float(energy), film.gap, film.recombine_reemit_prob, np.uint64(stream.key), stream.counter, out
    )
    stream.counter = int(ctr)
    return [float(e) for e in out[:n]], float(retained)


@dataclass
class TraceResult:
    events: list[Event]
    qubit_energy: np.ndarray
    material_energy: np.ndarray
    escaped: float
    dropped: float
    stuck: float
    path_length: float
    bounces: int
    n_phonons: int

    def __iter__(self):
        return iter(self.events)

    def __len__(self):
        return len(self.events)


def trace(
    layout: ChipLayout,
    packet: PhononPacket,
    stream: PacketStream,
    track_floor: float = 0.0,
    max_bounces: int = 10_000,
    log_capacity: int = 100_000,
    packet_id: int = 0,
) -> TraceResult:
    """Follow one packet and its cascade descendants, logging every event."""
    x, y, z = packet.position
    if not (layout.in_bounds(x, y) and 0.0 <= z <= layout.substrate_thickness):
        raise ValueError("packet starts outside the substrate")
    nq, nm = len(layout.qubits), len(layout.materials)
    acc_q, acc_qpath, qmin = np.zeros(nq), np.zeros(nq), np.full(nq, np.inf)
    acc_m, misc = np.zeros(nm), np.zeros(_N_MISC)
    hist = np.zeros(N_BOUNCE_BINS, dtype=np.int64)
    while True:
        log = np.zeros((log_capacity, 6))
        stack = np.empty((_STACK_CAP, 4))
        ctr, log_n = _transport(
            packet.energy, x, y, z, *packet.direction, 0.0, np.uint64(stream.key), stream.counter,
            packet_id, *_geometry_args(layout), track_floor, max_bounces,
            acc_q, acc_qpath, qmin, acc_m, misc, hist, stack, log, 0, True,
        )
        if log_n <= log_capacity:
            break
        log_capacity = 2 * log_n
        acc_q[:], acc_qpath[:], qmin[:], acc_m[:], misc[:], hist[:] = 0, 0, np.inf, 0, 0, 0
    stream.counter = int(ctr)
    w = packet.weight
    return TraceResult(
        events=_decode(log[:log_n]),
        qubit_energy=acc_q * w,
        material_energy=acc_m * w,
        escaped=misc[_ESC] * w,
        dropped=misc[_DROP] * w,
        stuck=misc[_STUCK] * w,
        path_length=float(misc[_PATH]),
        bounces=int(misc[_BOUNCES]),
        n_phonons=int(misc[_PHONONS]),
    )


def _decode(rows) -> list[Event]:
    return [
        Event(int(r[0]), EVENT_NAMES[int(r[1])], int(r[2]), float(r[3]), float(r[4]), float(r[5]))
        for r in rows
    ]


@dataclass
class CascadeStats:
    """Totals of one cascade run.

    Powers are in µeV/µs (tunnelling-event rate times energy per event);
    ``*_se`` are one-sigma Monte Carlo standard errors.
    """

    qubit_labels: list[str]
    material_names: list[str]
    n_packets: int
    seed: int
    packet_weight: float
    injected: float
    qubit_power: dict[str, float]
    qubit_power_se: dict[str, float]
    material_absorbed: dict[str, float]
    escaped: float
    dropped: float
    stuck: float
    bounce_histogram: np.ndarray
    qubit_min_event_energy: dict[str, float]
    qubit_mean_delay: dict[str, float] = field(default_factory=dict)  # µs, energy weighted
    mean_transit_length: float = 0.0
    mean_bounces: float = 0.0
    n_phonons: int = 0
    per_packet_qubit: np.ndarray | None = field(default=None, repr=False)
    events: list[Event] | None = field(default=None, repr=False)

    def ledger_residual(self) -> float:
        """Relative mismatch between injected and accounted-for energy."""
        if self.injected == 0.0:
            total = math.fsum(self.qubit_power.values()) + math.fsum(self.material_absorbed.values())
            return abs(total + self.escaped + self.dropped + self.stuck)
        accounted = math.fsum(
            list(self.qubit_power.values())
            + list(self.material_absorbed.values())
            + [self.escaped, self.dropped, self.stuck]
        )
        return abs(accounted - self.injected) / self.injected

    def fields_equal(self, other: "CascadeStats") -> bool:
        scalars = (
            "injected", "escaped", "dropped", "stuck", "mean_transit_length",
            "mean_bounces", "n_phonons", "packet_weight",
        )
        return (
            all(getattr(self, s) == getattr(other, s) for s in scalars)
            and self.qubit_power == other.qubit_power
            and self.qubit_power_se == other.qubit_power_se
            and self.material_absorbed == other.material_absorbed
            and self.qubit_min_event_energy == other.qubit_min_event_energy
            and self.qubit_mean_delay == other.qubit_mean_delay
            and np.array_equal(self.bounce_histogram, other.bounce_histogram)
        )


def _fsum_cols(a):
    return np.array([math.fsum(a[:, j]) for j in range(a.shape[1])])


def _empty_stats(layout, config, log):
    labels = [q.label for q in layout.qubits]
    mats = layout.material_names
    return CascadeStats(
        qubit_labels=labels,
        material_names=mats,
        n_packets=config.n_packets,
        seed=config.seed,
        packet_weight=0.0,
        injected=0.0,
        qubit_power={k: 0.0 for k in labels},
        qubit_power_se={k: 0.0 for k in labels},
        material_absorbed={k: 0.0 for k in mats},
        escaped=0.0,
        dropped=0.0,
        stuck=0.0,
        bounce_histogram=np.zeros(N_BOUNCE_BINS, dtype=np.int64),
        qubit_min_event_energy={k: math.inf for k in labels},
        qubit_mean_delay={k: 0.0 for k in labels},
        per_packet_qubit=np.zeros((config.n_packets, len(labels))) if config.keep_per_packet else None,
        events=[] if log else None,
    )


def run_source(
    layout: ChipLayout,
    source: PhononSource,
    config: CascadeConfig,
    log: bool = False,
) -> CascadeStats:
    """Inject ``config.n_packets`` tunnelling events at the injector and trace everything.

    Packets are processed in fixed chunks of ``config.chunk_size`` across
    ``config.workers`` threads; per-packet ledgers are merged in packet order
    with exactly rounded sums, so the result is bit-identical for any worker
    count.
    """
    config.check_against(layout)
    if source.empty:
        return _empty_stats(layout, config, log)

    n = config.n_packets
    nq, nm = len(layout.qubits), len(layout.materials)
    out_inj = np.zeros(n)
    out_q = np.zeros((n, nq))
    out_qpath = np.zeros((n, nq))
    out_qmin = np.full((n, nq), np.inf)
    out_m = np.zeros((n, nm))
    out_misc = np.zeros((n, _N_MISC))
    starts = list(range(0, n, config.chunk_size))
    hists = [np.zeros(N_BOUNCE_BINS, dtype=np.int64) for _ in starts]
    logs: list = [None] * len(starts)
    geom = _geometry_args(layout)
    ix, iy = layout.injector_pos

    def work(ci):
        s = starts[ci]
        e = min(s + config.chunk_size, n)
        cap = 64 * (e - s) if log else 1
        while True:
            sl = slice(s, e)
            out_inj[sl] = 0
            out_q[sl] = 0
            out_qpath[sl] = 0
            out_qmin[sl] = np.inf
            out_m[sl] = 0
            out_misc[sl] = 0
            hists[ci][:] = 0
            buf = np.zeros((cap, 6))
            log_n = _run_chunk(
                np.uint64(config.seed), s, e - s, source.pair_energy, source.gap,
                source.recombination_prob, source.min_phonon, ix, iy, *geom,
                config.track_floor, config.max_bounces,
                out_inj[sl], out_q[sl], out_qpath[sl], out_qmin[sl], out_m[sl], out_misc[sl], hists[ci],
                buf, log,
            )
            if not log or log_n <= cap:
                break
            cap = log_n
        if log:
            logs[ci] = buf[:log_n]

    if config.workers == 1:
        for ci in range(len(starts)):
            work(ci)
    else:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            list(pool.map(work, range(len(starts))))

    w = source.pair_rate / n
    q_raw = _fsum_cols(out_q)
    q_sq = _fsum_cols(out_q**2)
    q_path = _fsum_cols(out_qpath)
    var = np.maximum(q_sq - q_raw**2 / n, 0.0) / max(n - 1, 1)
    se = w * np.sqrt(n * var)
    m_raw = _fsum_cols(out_m)
    misc = _fsum_cols(out_misc)
    labels = [q.label for q in layout.qubits]
    mats = layout.material_names
    n_phonons = int(misc[_PHONONS])
    return CascadeStats(
        qubit_labels=labels,
        material_names=mats,
        n_packets=n,
        seed=config.seed,
        packet_weight=w,
        injected=math.fsum(out_inj) * w,
        qubit_power={k: float(q_raw[i] * w) for i, k in enumerate(labels)},
        qubit_power_se={k: float(se[i]) for i, k in enumerate(labels)},
        material_absorbed={k: float(m_raw[i] * w) for i, k in enumerate(mats)},
        escaped=float(misc[_ESC] * w),
        dropped=float(misc[_DROP] * w),
        stuck=float(misc[_STUCK] * w),
        bounce_histogram=np.sum(hists, axis=0),
        qubit_min_event_energy={k: float(out_qmin[:, i].min()) for i, k in enumerate(labels)},
        qubit_mean_delay={
            k: float(q_path[i] / q_raw[i] / layout.sound_speed) if q_raw[i] > 0 else 0.0
            for i, k in enumerate(labels)
        },
        mean_transit_length=float(misc[_PATH] / n_phonons) if n_phonons else 0.0,
        mean_bounces=float(misc[_BOUNCES] / n_phonons) if n_phonons else 0.0,
        n_phonons=n_phonons,
        per_packet_qubit=out_q * w if config.keep_per_packet else None,
        events=[ev for chunk in logs for ev in _decode(chunk)] if log else None,
    )


def events_csv(events: list[Event], layout: ChipLayout) -> str:
    """Event log as CSV ``packet_id,event,material,energy_ueV,x_mm,y_mm``.

    ``material`` names the film or qubit involved, empty when there is none.
    """
    mats = layout.material_names
    qubits = [q.label for q in layout.qubits]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["packet_id", "event", "material", "energy_ueV", "x_mm", "y_mm"])
    for ev in events:
        names = qubits if ev.event == "qubit" else mats
        where = names[ev.index] if 0 <= ev.index < len(names) else ""
        w.writerow([ev.packet_id, ev.event, where, repr(ev.energy), repr(ev.x), repr(ev.y)])
    return buf.getvalue()
