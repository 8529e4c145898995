"""Named quench geometries and model parameter sets used by the experiments.

Units: Omega = 1 for Rydberg arrays, J = 1 for Hubbard-type models.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .hamiltonians import (FermiHubbardParams, HBHParams, RydbergParams, bose_hubbard_hamiltonian,
                           fermi_hubbard_hamiltonian, ground_state, hofstadter_hops, rydberg_hamiltonian)
from .hilbert import (Basis, basis_state, blockaded_basis, boson_basis, chain_edges, fermion_basis,
                      tensor_extend)
from .physics import MBCNRegions
from .scrambling import QuenchConfig

TWO_PI = 2 * math.pi
RYDBERG_DEFAULT = RydbergParams(1.0, -1.0, 0.0)


# ---------------------------------------------------------------------------
# Rydberg arrays
# ---------------------------------------------------------------------------

def rydberg_chain(n: int) -> Basis:
    return blockaded_basis(n, chain_edges(n))


def rydberg_ground_state(n: int, delta: float = -1.0, v2: float = 0.0) -> np.ndarray:
    basis = rydberg_chain(n)
    return ground_state(rydberg_hamiltonian(basis, RydbergParams(1.0, delta, v2))).vector


def rydberg_ladder(n_sys: int, n_anc: int, t: float = TWO_PI, offset: int = 1,
                   params: RydbergParams = RYDBERG_DEFAULT, label: str = "") -> QuenchConfig:
    """Global quench: system chain beside a parallel ancilla chain.

    System atom i is blockaded with ancilla i + ``offset``; both chains carry
    nearest-neighbour blockade and the ancillas start in the ground state.
    """
    sysb, ancb = rydberg_chain(n_sys), rydberg_chain(n_anc)
    seam = [(i, n_sys + i + offset) for i in range(n_sys) if 0 <= i + offset < n_anc]
    ext = tensor_extend(sysb, ancb, seam)
    phi = basis_state(ancb, np.zeros(n_anc, dtype=np.uint8))
    return QuenchConfig(ext, phi, rydberg_hamiltonian(ext, params), t, setup="global",
                        label=label or f"rydberg-ladder-{n_sys}+{n_anc}")


def rydberg_single_atom_patch(n_anc: int = 3, t: float = 4 * TWO_PI,
                              params: RydbergParams = RYDBERG_DEFAULT) -> QuenchConfig:
    """One isolated system atom at the end of a blockaded chain of ancillas."""
    sysb = blockaded_basis(1, [])
    ancb = rydberg_chain(n_anc)
    ext = tensor_extend(sysb, ancb, [(0, 1)])
    phi = basis_state(ancb, np.zeros(n_anc, dtype=np.uint8))
    return QuenchConfig(ext, phi, rydberg_hamiltonian(ext, params), t, setup="patched",
                        label=f"rydberg-atom+{n_anc}")


def rydberg_embedded_chain(layout: tuple, t: float, params: RydbergParams = RYDBERG_DEFAULT,
                           label: str = "") -> QuenchConfig:
    """One straight blockaded chain: ancilla and system blocks in ``layout`` order."""
    from .diagnostics import ChainFamily, chain_setup

    ext, h, phi, _ = chain_setup(ChainFamily(tuple(layout), params))
    return QuenchConfig(ext, phi, h, t, setup="global", label=label or f"rydberg-chain-{layout}")


RYDBERG_PRESETS = {
    "rydberg-4+5": dict(n_sys=4, n_anc=5),
    # a 6+7 ladder has 408 outcomes < 21^2, so this one is a single chain
    "rydberg-6+7": dict(n_sys=6, n_anc=7, layout=(3, 6, 4), t=6 * TWO_PI, v2=0.2),
    "rydberg-6+8": dict(n_sys=6, n_anc=8),
    "rydberg-8+10": dict(n_sys=8, n_anc=10),
}


def rydberg_preset(name: str, t: float | None = None) -> QuenchConfig:
    try:
        kw = RYDBERG_PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown Rydberg preset {name!r}; choose from {sorted(RYDBERG_PRESETS)}") from None
    t = kw.get("t", TWO_PI) if t is None else t
    params = RydbergParams(1.0, -1.0, kw.get("v2", 0.0))
    if "layout" in kw:
        return rydberg_embedded_chain(kw["layout"], t, params, label=name)
    return rydberg_ladder(kw["n_sys"], kw["n_anc"], t=t, params=params, label=name)


def rydberg_preset_state(name: str) -> np.ndarray:
    """Ground state of the preset's system chain under the preset's couplings."""
    kw = RYDBERG_PRESETS[name]
    return rydberg_ground_state(kw["n_sys"], -1.0, kw.get("v2", 0.0))


# ---------------------------------------------------------------------------
# spinful fermions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FermionBridge:
    """Bridged quench for a path of system sites.

    A chain of ``n_sys + extra`` ancilla sites runs alongside the system
    path; site i of each is linked by a tunnelling bond.  One up and one
    down fermion start on ancilla ``start``.
    """
    u: float = 4.0
    t: float = 4.0
    extra: int = 1
    start: int = 0
    j: float = 1.0


BCS_BRIDGE = FermionBridge()


def fermion_bridged(n_sys: int, bridge: FermionBridge = BCS_BRIDGE) -> QuenchConfig:
    n_anc = n_sys + bridge.extra
    sysb = fermion_basis(n_sys)
    ancb = fermion_basis(n_anc, 1, 1)
    ext = tensor_extend(sysb, ancb)
    bonds = ([(i, i + 1) for i in range(n_sys - 1)]
             + [(n_sys + i, n_sys + i + 1) for i in range(n_anc - 1)]
             + [(i, n_sys + i) for i in range(n_sys)])
    h = fermi_hubbard_hamiltonian(ext, FermiHubbardParams(bridge.j, bridge.u, tuple(bonds)))
    cfg = np.zeros(2 * n_anc, dtype=np.uint8)
    cfg[bridge.start] = cfg[n_anc + bridge.start] = 1
    return QuenchConfig(ext, basis_state(ancb, cfg), h, bridge.t, charges=sysb.spin_numbers(),
                        setup="bridged", label=f"fermion-bridge-{n_sys}")


def fermion_two_patch(u: float = 4.0, t: float = 4.0, j: float = 1.0) -> QuenchConfig:
    """Three system sites split into patches {1, 2} and {0} with no tunnelling between them.

    Each patch has its own ancillas holding one doubly occupied site, so the
    particle number of every patch is conserved separately.
    """
    sysb = fermion_basis(3)
    ancb = fermion_basis(3, [1, 2], [1, 2])
    ext = tensor_extend(sysb, ancb)
    bonds = ((1, 2), (3, 4), (1, 3), (2, 4), (0, 5))
    h = fermi_hubbard_hamiltonian(ext, FermiHubbardParams(j, u, bonds))
    cfg = np.zeros(6, dtype=np.uint8)
    cfg[[0, 2, 3, 5]] = 1
    return QuenchConfig(ext, basis_state(ancb, cfg), h, t, charges=sysb.spin_numbers(),
                        setup="patched", label="fermion-two-patch")


# ---------------------------------------------------------------------------
# Hofstadter-Bose-Hubbard
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MBCNPreset:
    params: HBHParams
    n_bosons: int
    regions: MBCNRegions
    n_max: int
    """Largest boson number kept on R1 u R3; heavier outcomes are discarded."""
    anc_sites: int = 5
    anc_bosons: int = 2
    anc_start: tuple = (1, 2)
    t: float = 10.0
    anc_layout: str = "path"
    """'path': a chain joining the strip tops; 'mirror': one ancilla beside every system site."""
    meta: dict = field(default_factory=dict)


MBCN_PRESETS = {
    # nu = N / (alpha (Lx - 1)(Ly - 1)) = 1/2 on both lattices
    "hbh-4x4": MBCNPreset(HBHParams(4, 4, 1.0, 5.0, 2 / 3), 3, MBCNRegions(4, 4, 0, 1, 2, 3, 0), 2,
                          anc_sites=6, anc_bosons=4, anc_start=(0, 1, 3, 4), anc_layout="mirror"),
    "hbh-6x6": MBCNPreset(HBHParams(6, 6, 1.0, 5.0, 0.25), 3, MBCNRegions(6, 6, 1, 1, 3, 5, 0), 2),
}


def hbh_basis(preset: MBCNPreset) -> Basis:
    return boson_basis(preset.params.lx * preset.params.ly, preset.n_bosons)


def mbcn_quench(preset: MBCNPreset) -> QuenchConfig:
    """Bridged quench on R1 u R3 with an ancilla register tunnel-coupled to the strips.

    The 'path' layout is a chain linking the top ends of the two strips; the
    'mirror' layout copies both strips and couples every site to its twin.

    System sites are R1 (bottom to top) followed by R3; the strips keep the
    lattice hops and phases of the model.  The quench runs under the same
    Bose-Hubbard interaction.
    """
    p, reg = preset.params, preset.regions
    sys_sites = reg.r1 + reg.r3
    ns = len(sys_sites)
    loc = {s: i for i, s in enumerate(sys_sites)}
    hops = [(loc[a], loc[b], amp) for a, b, amp in hofstadter_hops(p) if a in loc and b in loc]
    na = preset.anc_sites
    top1 = len(reg.r1) - 1
    if preset.anc_layout == "path":
        hops += [(ns + i + 1, ns + i, -p.j + 0j) for i in range(na - 1)]
        hops += [(ns, top1, -p.j + 0j), (ns + na - 1, ns - 1, -p.j + 0j)]
    elif preset.anc_layout == "mirror":
        if na != ns:
            raise ValueError("a mirror layout needs one ancilla per system site")
        # copies of both strips, joined at their tops, each site tunnelling to its twin
        anc = [(a, b) for a, b in zip(range(ns - 1), range(1, ns)) if a != top1] + [(top1, ns - 1)]
        hops += [(ns + b, ns + a, -p.j + 0j) for a, b in anc]
        hops += [(ns + i, i, -p.j + 0j) for i in range(ns)]
    else:
        raise ValueError(f"unknown ancilla layout {preset.anc_layout!r}")
    sysb = boson_basis(ns, list(range(preset.n_max + 1)))
    ancb = boson_basis(na, preset.anc_bosons)
    ext = tensor_extend(sysb, ancb)
    cfg = np.zeros(na, dtype=np.uint8)
    for a in preset.anc_start:
        cfg[a] += 1
    h = bose_hubbard_hamiltonian(ext, hops, p.u)
    return QuenchConfig(ext, basis_state(ancb, cfg), h, preset.t, charges=sysb.particle_numbers(),
                        setup="bridged", label="mbcn-patch")


def plaquette_quench(block: list[int], params: HBHParams, n_max: int, anc_bosons: int = 2,
                     t: float = 10.0) -> QuenchConfig:
    """A block of lattice sites quenched with a copy of itself as ancilla layer.

    Intra-block hops keep the model phases; every site tunnels to its copy.
    """
    n = len(block)
    loc = {s: i for i, s in enumerate(block)}
    intra = [(loc[a], loc[b], amp) for a, b, amp in hofstadter_hops(params) if a in loc and b in loc]
    hops = intra + [(a + n, b + n, amp) for a, b, amp in intra] + [(n + i, i, -params.j + 0j) for i in range(n)]
    sysb = boson_basis(n, list(range(n_max + 1)))
    ancb = boson_basis(n, anc_bosons)
    ext = tensor_extend(sysb, ancb)
    cfg = np.zeros(n, dtype=np.uint8)
    for k in range(anc_bosons):
        cfg[k % n] += 1
    h = bose_hubbard_hamiltonian(ext, hops, params.u)
    return QuenchConfig(ext, basis_state(ancb, cfg), h, t, charges=sysb.particle_numbers(),
                        setup="patched", label=f"plaquette-{n}")
