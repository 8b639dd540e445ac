"""Decoupling-based father protocol: random encoders, decoupling errors and Uhlmann decoders.

Conventions:

- ``A0`` carries the quantum message, purified by a reference ``R``.
- ``A1`` holds Alice's half of the pre-shared entanglement, with Bob's half
  on ``B1``.
- The encoder ``V`` maps ``A0 A1`` into the channel input.
- ``E`` is the full environment of the channel's Stinespring dilation.
- The reference input ``sigma`` on the channel input (purified on ``A``)
  fixes ``Omega_ABE``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from . import entropy as en
from .capacity import channel_output_state
from .channels import KrausChannel, apply, complementary, stinespring
from .errors import DomainError, SizeError
from .mathcore import SystemLayout, permute_vector, trace_norm
from .states import (
    DensityOperator,
    PureState,
    as_density,
    fidelity,
    haar_unitary,
    max_entangled,
    maximally_mixed,
    purify,
)

MAX_TOTAL_DIM = 64
SVD_ZERO = 1e-12


def _term(exponent: float) -> float:
    if exponent == -math.inf:
        return 0.0
    return 3 * 2.0 ** exponent


def delta_bounds(h_max_A_tilde: float, h_min_A: float, h_min_A_given_E: float,
                 h_min_Atilde_given_R: float, eps: float) -> tuple[float, float]:
    """``(delta1, delta2)`` of the one-shot decoupling theorem.

    ``delta1 = 3 * 2^{(H_max(A~) - H_min(A)) / 2} + 24 eps`` and
    ``delta2 = 3 * 2^{-(H_min(A|E) + H_min(A~|R)) / 2} + 24 eps``.
    An exponent of ``-inf`` (infinite entropy gap) contributes 0.
    """
    if not eps >= 0:
        raise DomainError(f"eps must be non-negative, got {eps}")
    e1 = 0.5 * (h_max_A_tilde - h_min_A)
    e2 = -0.5 * (h_min_A_given_E + h_min_Atilde_given_R)
    if math.isnan(e1) or math.isnan(e2):
        raise DomainError("entropy inputs must not be NaN")
    return _term(e1) + 24 * eps, _term(e2) + 24 * eps


def gate_conditions(h_max_A_tilde: float, h_min_A: float, h_min_A_given_E: float,
                    h_min_Atilde_given_R: float, eps: float) -> tuple[bool, bool]:
    """Entropy conditions under which ``delta1 <= 27 eps`` and ``delta2 <= 27 eps``."""
    two_log = 2 * math.log2(eps)
    return (h_max_A_tilde - h_min_A <= two_log,
            h_min_A_given_E + h_min_Atilde_given_R >= -two_log)


def sample_encoder(dim_in: int, dim_out: int, seed) -> np.ndarray:
    """First ``dim_in`` columns of a Haar unitary on ``dim_out``."""
    if dim_in > dim_out:
        raise DomainError(f"encoder input dim {dim_in} exceeds output dim {dim_out}")
    return haar_unitary(dim_out, seed)[:, :dim_in]


def _input_matrix(input_state, d: int) -> np.ndarray:
    rho = as_density(input_state)
    if rho.dim != d:
        raise DomainError(f"input dimension {rho.dim} does not match channel input {d}")
    return rho.matrix


def environment_reference(ch: KrausChannel, input_state) -> np.ndarray:
    """``Omega^E``: the complementary channel applied to the reference input."""
    m = _input_matrix(input_state, ch.dim_in)
    return apply(complementary(ch), DensityOperator(m)).matrix


def decoupling_error(ch: KrausChannel, v: np.ndarray, phi_input, a0: int | None = None) -> float:
    """``|| N_c(V (Phi^{A0 R} (x) tau^{A1}) V^dag) - Omega^E (x) tau^R ||_1``.

    ``v`` maps ``A0 A1`` (``A0`` major) into the channel input; ``a0`` is
    ``|A0|`` and defaults to the smallest factor making ``|A0| * |A1|``
    square (``|A0| = |A1|``).
    """
    v = np.asarray(v, dtype=complex)
    din, dtil = v.shape
    if din != ch.dim_in:
        raise DomainError(f"encoder output dim {din} does not match channel input {ch.dim_in}")
    if a0 is None:
        a0 = math.isqrt(dtil)
    if dtil % a0:
        raise DomainError(f"|A0|={a0} does not divide the encoder input dim {dtil}")
    a1 = dtil // a0
    omega_e = environment_reference(ch, phi_input)
    # rho on (A0 A1, R): Phi^{A0 R} (x) tau^{A1}, reordered so R is last
    phi = max_entangled(a0, ("A0", "R")).to_density()
    joint = phi.tensor(maximally_mixed(a1, "A1")).reduce(["A0", "A1", "R"])
    m = joint.matrix.reshape(dtil, a0, dtil, a0)
    # apply V on the A~ factor, then the complementary channel
    m = np.einsum("ia,arbs,jb->irjs", v, m, v.conj())
    comp = complementary(ch).stacked()
    out = np.einsum("kei,irjs,kfj->erfs", comp, m, comp.conj())
    de = comp.shape[1]
    out = out.reshape(de * a0, de * a0)
    target = np.kron(omega_e, np.eye(a0) / a0)
    return trace_norm(out - target)


# --------------------------------------------------------------------------
# Uhlmann decoder


def _complete_basis(cols: np.ndarray, dim: int) -> np.ndarray:
    """Orthonormal completion of ``cols`` by Gram-Schmidt over the standard basis in order."""
    basis = [c for c in cols.T]
    for i in range(dim):
        if len(basis) == dim:
            break
        e = np.zeros(dim, dtype=complex)
        e[i] = 1.0
        for b in basis:
            e = e - b * np.vdot(b, e)
        for b in basis:
            e = e - b * np.vdot(b, e)
        nrm = np.linalg.norm(e)
        if nrm > 1e-8:
            basis.append(e / nrm)
    return np.array(basis[len(cols.T):]).T.reshape(dim, dim - cols.shape[1])


@dataclass
class UhlmannDecoder:
    """CPTP decoder from Bob's systems to the output systems.

    ``kraus`` lists the Kraus operators (the Uhlmann partial isometry first,
    followed by a fixed-output branch on its kernel when needed).
    ``f_opt`` is the Uhlmann fidelity of the two reference marginals.
    """

    kraus: list
    f_opt: float
    bob_layout: SystemLayout
    out_layout: SystemLayout

    @property
    def isometry(self) -> np.ndarray:
        return self.kraus[0]

    def as_channel(self) -> KrausChannel:
        return KrausChannel(tuple(self.kraus), "bob", "out", name="uhlmann_decoder")


def _split_matrix(psi: PureState, ref: list, side: list) -> np.ndarray:
    v = permute_vector(psi.amplitudes, psi.layout, ref + side)
    return v.reshape(psi.layout.dims_of(ref), psi.layout.dims_of(side))


def build_decoder(global_pure_out: PureState, target_pure: PureState, bob_labels,
                  out_labels=None) -> UhlmannDecoder:
    """Uhlmann decoder aligning Bob's purification with the target purification.

    Both states must share the same reference labels: every label of
    ``global_pure_out`` outside ``bob_labels`` and every label of
    ``target_pure`` outside ``out_labels``.  Writing the states as matrices
    ``X`` (reference x Bob) and ``Y`` (reference x out), the decoder is
    ``W = Q P^dag`` from the SVD ``(Y^dag X)^T = P S Q^dag``.  Singular
    vectors with zero singular value are replaced by a Gram-Schmidt
    completion over the standard basis, so the result is deterministic.
    """
    bob = list(bob_labels)
    ref = [lab for lab in global_pure_out.layout.labels if lab not in set(bob)]
    if out_labels is None:
        out = [lab for lab in target_pure.layout.labels if lab not in set(ref)]
    else:
        out = list(out_labels)
    if sorted(ref) != sorted(lab for lab in target_pure.layout.labels if lab not in set(out)):
        raise DomainError("global and target states must share the same reference systems")
    if global_pure_out.layout.select(ref).dims != target_pure.layout.select(ref).dims:
        raise DomainError("reference dimensions differ between global and target states")
    x = _split_matrix(global_pure_out, ref, bob)
    y = _split_matrix(target_pure, ref, out)
    d_bob, d_out = x.shape[1], y.shape[1]
    mt = (y.conj().T @ x).T  # d_bob x d_out
    p, s, qh = np.linalg.svd(mt, full_matrices=False)
    f_opt = float(np.sum(s))
    keep = s > SVD_ZERO * max(1.0, s[0] if s.size else 0.0)
    p_nz, q_nz = p[:, keep], qh.conj().T[:, keep]
    k = min(d_bob, d_out)
    nz = int(np.sum(keep))
    p_full = np.hstack([p_nz, _complete_basis(p_nz, d_bob)[:, : k - nz]]) if nz < k else p_nz
    q_full = np.hstack([q_nz, _complete_basis(q_nz, d_out)[:, : k - nz]]) if nz < k else q_nz
    w = q_full @ p_full.conj().T
    kraus = [w]
    if d_out < d_bob:
        kernel = _complete_basis(p_full, d_bob)
        e0 = np.zeros((d_out, 1), dtype=complex)
        e0[0, 0] = 1.0
        kraus.extend(e0 @ kernel[:, i:i + 1].conj().T for i in range(kernel.shape[1]))
    return UhlmannDecoder(kraus, f_opt, global_pure_out.layout.select(bob),
                          target_pure.layout.select(out))


def decode_marginal(global_pure_out: PureState, decoder: UhlmannDecoder, bob_labels,
                    target_pure: PureState, keep) -> DensityOperator:
    """Apply ``decoder`` on Bob's side and return the marginal on ``keep``."""
    bob = list(bob_labels)
    ref = [lab for lab in global_pure_out.layout.labels if lab not in set(bob)]
    x = _split_matrix(global_pure_out, ref, bob)
    ref_layout = global_pure_out.layout.select(ref)
    full = ref_layout + decoder.out_layout
    keep = list(keep)
    acc = None
    for kop in decoder.kraus:
        z = (x @ kop.T).reshape(-1)
        part = PureState.normalized(z, full) if np.linalg.norm(z) > 1e-300 else None
        if part is None:
            continue
        w = float(np.linalg.norm(z) ** 2)
        rho = part.marginal(keep).reduce(keep).matrix * w
        acc = rho if acc is None else acc + rho
    layout = full.select(keep)
    return DensityOperator(acc, layout)


# --------------------------------------------------------------------------
# protocol pieces


def achievable_rates(ch: KrausChannel, input_state, eps: float) -> tuple[float, float]:
    """``(log|A0|, log|A1|)`` from the smoothed entropies of ``Omega``."""
    if not 0 < eps < 1:
        raise DomainError(f"eps must lie in (0, 1), got {eps}")
    out = channel_output_state(ch, input_state)
    hmin = en.h_min_smooth(out.marginal(["A"]), (("A",), ()), eps).value
    hmax = en.h_max_smooth(out.marginal(["A", "B"]), (("A",), ("B",)), eps).value
    return 0.5 * (hmin - hmax) + 2 * math.log2(eps), 0.5 * (hmin + hmax)


def protocol_entropies(ch: KrausChannel, input_state, eps: float, a0: int, a1: int) -> dict:
    """The four smoothed entropies entering ``delta1`` and ``delta2``."""
    out = channel_output_state(ch, input_state)
    tau = maximally_mixed(a0 * a1, "At")
    code = max_entangled(a0, ("A0", "R")).to_density().tensor(maximally_mixed(a1, "A1"))
    return {
        "h_max_A_tilde": en.h_max_smooth(tau, (("At",), ()), eps).value,
        "h_min_A": en.h_min_smooth(out.marginal(["A"]), (("A",), ()), eps).value,
        "h_min_A_given_E": en.h_min_smooth(out.marginal(["A", "E"]), (("A",), ("E",)), eps).value,
        "h_min_Atilde_given_R": en.h_min_smooth(code, (("A0", "A1"), ("R",)), eps).value,
    }


def _global_state(ch: KrausChannel, v: np.ndarray, a0: int, a1: int) -> PureState:
    """``(U_N V) (Phi^{R A0} (x) Phi^{A1 B1})`` on ``R, B1, B, E``."""
    phi = max_entangled(a0, ("R", "A0")).tensor(max_entangled(a1, ("A1", "B1")))
    vec = permute_vector(phi.amplitudes, phi.layout, ["A0", "A1", "R", "B1"])
    t = vec.reshape(a0 * a1, a0 * a1)
    u = stinespring(ch)
    t = (u.isometry @ v) @ t  # (B E) x (R B1)
    lay = SystemLayout((("B", u.dim_out), ("E", u.dim_env), ("R", a0), ("B1", a1)))
    return PureState.normalized(t.reshape(-1), lay).permute(["R", "B1", "B", "E"])


def _target_state(omega_e: np.ndarray, a0: int, a1: int) -> PureState:
    """``Phi^{R A0} (x) Phi^{A1 B1} (x) |Omega>^{E X}`` on ``R, E, A0h, A1h, B1h, X``."""
    purif = purify(DensityOperator(omega_e, SystemLayout((("E", omega_e.shape[0]),))), "X")
    phi = max_entangled(a0, ("R", "A0h")).tensor(max_entangled(a1, ("A1h", "B1h")))
    return phi.tensor(purif).permute(["R", "E", "A0h", "A1h", "B1h", "X"])


@dataclass
class DecouplingTrial:
    """Outcome of one sampled encoder."""

    seed: int
    encoder: np.ndarray
    decoupling_error: float
    bound: float
    decoder_fidelity: float
    f_opt: float
    output_distance: float
    entanglement_fidelity: float
    rates: tuple = field(default=(0.0, 0.0))


def run_trial(ch: KrausChannel, input_state, v: np.ndarray, a0: int, a1: int, bound: float,
              seed: int = 0, rates=(0.0, 0.0), omega_e=None) -> DecouplingTrial:
    if omega_e is None:
        omega_e = environment_reference(ch, input_state)
    err = decoupling_error(ch, v, input_state, a0)
    glob = _global_state(ch, v, a0, a1)
    target = _target_state(omega_e, a0, a1)
    dec = build_decoder(glob, target, ["B1", "B"], ["A0h", "A1h", "B1h", "X"])
    keep = ["R", "A0h", "A1h", "B1h"]
    out = decode_marginal(glob, dec, ["B1", "B"], target, keep)
    ideal = target.marginal(keep).reduce(keep)
    code = decode_marginal(glob, dec, ["B1", "B"], target, ["R", "A0h"])
    phi = max_entangled(a0, ("R", "A0h")).amplitudes
    f_e = float(np.real(phi.conj() @ code.matrix @ phi))
    return DecouplingTrial(
        seed=seed,
        encoder=v,
        decoupling_error=err,
        bound=bound,
        decoder_fidelity=fidelity(out, ideal),
        f_opt=dec.f_opt,
        output_distance=trace_norm(out.matrix - ideal.matrix),
        entanglement_fidelity=f_e,
        rates=rates,
    )


def _trial_seeds(seed, trials: int) -> list[int]:
    children = np.random.SeedSequence(seed).spawn(trials)
    return [int(c.generate_state(1, dtype=np.uint64)[0]) for c in children]


def run_experiment(ch: KrausChannel, input_state, eps: float, trials: int = 100, seed=0,
                   a0: int = 2, a1: int = 2, jobs: int = 1) -> tuple[list[DecouplingTrial], dict]:
    """Sample ``trials`` Haar encoders ``A0 A1 -> A'`` and measure each.

    Returns the trials (in seed order) and a summary with ``delta1``,
    ``delta2``, the bound ``2 sqrt(delta1) + delta2``, minimum and mean
    errors, and the decoder-side checks.
    """
    if ch.dim_in < a0 * a1:
        raise DomainError(f"channel input dim {ch.dim_in} is smaller than |A0||A1| = {a0 * a1}")
    total = ch.dim_in * ch.dim_out
    if total > MAX_TOTAL_DIM:
        raise SizeError(f"input-output dimension {total} exceeds {MAX_TOTAL_DIM}")
    ent = protocol_entropies(ch, input_state, eps, a0, a1)
    d1, d2 = delta_bounds(ent["h_max_A_tilde"], ent["h_min_A"], ent["h_min_A_given_E"],
                          ent["h_min_Atilde_given_R"], eps)
    bound = 2 * math.sqrt(d1) + d2
    rates = (math.log2(a0), math.log2(a1))
    omega_e = environment_reference(ch, input_state)
    seeds = _trial_seeds(seed, trials)

    def one(s):
        v = sample_encoder(a0 * a1, ch.dim_in, s)
        return run_trial(ch, input_state, v, a0, a1, bound, s, rates, omega_e)

    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(jobs) as pool:
            results = list(pool.map(one, seeds))
    else:
        results = [one(s) for s in seeds]
    errors = np.array([t.decoupling_error for t in results])
    holds = errors <= bound
    dec_bound = 2 * math.sqrt(bound)
    summary = {
        "eps": eps,
        "a0": a0,
        "a1": a1,
        "trials": trials,
        "delta1": d1,
        "delta2": d2,
        "bound": bound,
        "entropies": ent,
        "min_error": float(errors.min()),
        "mean_error": float(errors.mean()),
        "std_error": float(errors.std(ddof=1)) if trials > 1 else 0.0,
        "min_within_bound": bool(errors.min() <= bound + 1e-9),
        "decoder_bound": dec_bound,
        "decoder_within_bound": bool(all(t.output_distance <= dec_bound + 1e-6
                                         for t, h in zip(results, holds) if h)),
        "decoder_within_sqrt_error": bool(all(t.output_distance <= 2 * math.sqrt(t.decoupling_error) + 1e-6
                                              for t in results)),
        "bound_vacuous": bool(bound >= 2),
    }
    return results, summary


def trials_to_csv(trials: list[DecouplingTrial]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["trial", "error", "bound", "decoder_fidelity"])
    for i, t in enumerate(trials):
        w.writerow([i, f"{t.decoupling_error:.12g}", f"{t.bound:.12g}", f"{t.decoder_fidelity:.12g}"])
    return buf.getvalue()
