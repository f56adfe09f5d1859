#!/usr/bin/env python3
"""Regenerate the committed reference data.

Produces, from independent sources (PySCF + libxc, SciPy):
  data/basis/{sto-3g,6-31g}.json     basis tables for H-Ar
  data/lebedev/lebedev_NNN.txt       Lebedev point sets (x y z w, sum w = 1)
  tests/fixtures/*.json              integral, energy, and functional oracles
  tests/fixtures/arrays/*.npy        NPY files written by numpy (loader oracle)
  data/datasets/*.yaml, *.npy        example datasets with exact STO-3G labels

Run from the repository root:  python3 tools/reference/make_reference_data.py
"""
import json
import os

import numpy as np
from pyscf import dft, fci, gto, scf
from pyscf.dft import libxc
from scipy.integrate import lebedev_rule

ROOT = os.path.abspath(os.path.join(os.path.dirname(__file__), "..", ".."))
SYMBOLS = ["H", "He", "Li", "Be", "B", "C", "N", "O", "F", "Ne",
           "Na", "Mg", "Al", "Si", "P", "S", "Cl", "Ar"]


def dump(path, obj):
    with open(os.path.join(ROOT, path), "w") as fh:
        json.dump(obj, fh, indent=1)
        fh.write("\n")


def export_basis(name, fname):
    table = {}
    for sym in SYMBOLS:
        shells = []
        for shell in gto.basis.load(name, sym):
            l = shell[0]
            prims = np.array(shell[1:], dtype=float)
            for k in range(1, prims.shape[1]):
                shells.append({"l": int(l),
                               "exponents": prims[:, 0].tolist(),
                               "coefficients": prims[:, k].tolist()})
        table[sym] = shells
    dump(f"data/basis/{fname}", table)


def export_lebedev():
    for npts, degree in [(26, 7), (50, 11), (86, 15), (110, 17), (194, 23)]:
        xyz, w = lebedev_rule(degree)
        assert xyz.shape[1] == npts
        w = w / w.sum()
        with open(os.path.join(ROOT, f"data/lebedev/lebedev_{npts:03d}.txt"), "w") as fh:
            fh.write(f"# Lebedev-Laikov {npts} points, degree {degree}; x y z w, weights sum to 1\n")
            for i in range(npts):
                fh.write("%.17g %.17g %.17g %.17g\n" % (xyz[0, i], xyz[1, i], xyz[2, i], w[i]))


def mol(atom, spin=0, charge=0, basis="sto-3g"):
    return gto.M(atom=atom, unit="Bohr", basis=basis, spin=spin, charge=charge,
                 cart=True, verbose=0)


def flat(a):
    return np.ascontiguousarray(a).ravel().tolist()


def export_integrals():
    systems = {
        "h2_sto3g": ("H 0 0 0; H 0 0 1.4", 0, 0),
        "he_sto3g": ("He 0 0 0", 0, 0),
        "heh+_sto3g": ("He 0 0 0; H 0 0 1.4632", 1, 0),
    }
    for tag, (atom, charge, spin) in systems.items():
        m = mol(atom, spin, charge)
        n = m.nao
        dump(f"tests/fixtures/integrals_{tag}.json", {
            "source": "PySCF " + __import__("pyscf").__version__,
            "moldesc": atom, "basis": "STO-3G", "charge": charge, "spin": spin,
            "nao": n,
            "S": flat(m.intor("int1e_ovlp")),
            "T": flat(m.intor("int1e_kin")),
            "V": flat(m.intor("int1e_nuc")),
            "ERI": flat(m.intor("int2e").reshape(n, n, n, n)),
        })
    # p functions: one-electron matrices only (the ERI tensor would be large).
    atom = "O 0 0 0; H 0 1.43 1.11; H 0 -1.43 1.11"
    m = mol(atom, basis="6-31g")
    dump("tests/fixtures/integrals_h2o_631g.json", {
        "source": "PySCF " + __import__("pyscf").__version__,
        "moldesc": atom, "basis": "6-31G", "charge": 0, "spin": 0, "nao": m.nao,
        "S": flat(m.intor("int1e_ovlp")),
        "T": flat(m.intor("int1e_kin")),
        "V": flat(m.intor("int1e_nuc")),
    })


def run_scf(m, xc=None):
    if xc is None:
        mf = scf.UHF(m) if m.spin else scf.RHF(m)
    else:
        mf = dft.UKS(m) if m.spin else dft.RKS(m)
        mf.xc = xc
        mf.grids.level = 9
    mf.conv_tol = 1e-12
    mf.kernel()
    assert mf.converged
    return mf


def export_energies():
    H = mol("H 0 0 0", spin=1)
    He = mol("He 0 0 0")
    Hep = mol("He 0 0 0", charge=1, spin=1)
    H2 = mol("H 0 0 0; H 0 0 1.4")
    out = {"source": "PySCF " + __import__("pyscf").__version__, "basis": "STO-3G",
           "grid": "PySCF level 9 (fine reference grid)"}
    out["hf"] = {k: float(run_scf(m).e_tot) for k, m in
                 [("H", H), ("He", He), ("H2_1.4", H2), ("He+", Hep)]}
    out["lda"] = {k: float(run_scf(m, "lda,pw").e_tot) for k, m in
                  [("H", H), ("He", He), ("H2_1.4", H2)]}
    out["pbe"] = {k: float(run_scf(m, "pbe,pbe").e_tot) for k, m in
                  [("H", H), ("He", He), ("H2_1.4", H2)]}
    # Fock matrix of converged He/STO-3G HF
    mf = run_scf(He)
    out["hf_fock_He"] = flat(mf.get_fock())
    # Exact (FCI) energies in STO-3G, used as training labels.
    ex = {}
    ex["H"] = out["hf"]["H"]
    ex["He+"] = out["hf"]["He+"]
    for k, m in [("He", He), ("H2_1.4", H2)]:
        mf = run_scf(m)
        ex[k] = float(fci.FCI(mf).kernel()[0])
    out["fci"] = ex
    # 6-31G HF energies for larger-basis checks
    out["hf_631g"] = {
        "He": float(run_scf(mol("He 0 0 0", basis="6-31g")).e_tot),
        "H2_1.4": float(run_scf(mol("H 0 0 0; H 0 0 1.4", basis="6-31g")).e_tot),
        "LiH_3.0": float(run_scf(mol("Li 0 0 0; H 0 0 3.0", basis="6-31g")).e_tot),
    }
    out["lda_631g"] = {
        "H2O": float(run_scf(mol("O 0 0 0; H 0 1.43 1.11; H 0 -1.43 1.11",
                                 basis="6-31g"), "lda,pw").e_tot),
    }
    dump("tests/fixtures/energies.json", out)


def export_functional_points():
    # Spin-polarized samples: (n_up, n_dn, sigma_uu, sigma_ud, sigma_dd)
    n_up = np.array([0.5, 3 / (8 * np.pi), 0.02, 1.2, 0.3, 3 / (4 * np.pi), 0.05])
    n_dn = np.array([0.5, 3 / (8 * np.pi), 0.01, 0.1, 0.3, 1e-30, 0.05])
    gu = np.array([[0.1, 0.0, 0.2], [0.0, 0.0, 0.0], [0.01, 0.02, 0.0], [0.5, -0.3, 0.2],
                   [0.2, 0.2, 0.2], [0.0, 0.0, 0.0], [0.03, 0.0, 0.0]])
    gd = np.array([[0.1, 0.0, 0.2], [0.0, 0.0, 0.0], [0.0, 0.01, 0.0], [0.05, 0.0, 0.1],
                   [0.2, 0.2, 0.2], [0.0, 0.0, 0.0], [0.03, 0.0, 0.0]])
    rho = np.zeros((2, 4, len(n_up)))
    rho[0, 0], rho[1, 0] = n_up, n_dn
    rho[0, 1:], rho[1, 1:] = gu.T, gd.T
    out = {"source": "libxc via PySCF", "n_up": n_up.tolist(), "n_dn": n_dn.tolist(),
           "grad_up": gu.tolist(), "grad_dn": gd.tolist()}
    n = n_up + n_dn
    for name, xc, is_gga in [("lda_x", "LDA_X", False), ("lda_c_pw", "LDA_C_PW", False),
                             ("pbe", "GGA_X_PBE,GGA_C_PBE", True)]:
        r = rho if is_gga else rho[:, 0]
        exc, vxc = libxc.eval_xc(xc, r, spin=1, deriv=1)[:2]
        entry = {"e": (exc * n).tolist(), "v_up": vxc[0][:, 0].tolist(),
                 "v_dn": vxc[0][:, 1].tolist()}
        if is_gga:
            entry["vsigma"] = vxc[1].tolist()
        out[name] = entry
    dump("tests/fixtures/functional_points.json", out)


def export_arrays():
    d = os.path.join(ROOT, "tests/fixtures/arrays")
    os.makedirs(d, exist_ok=True)
    a = np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.5]])
    np.save(os.path.join(d, "c_order.npy"), a)
    np.save(os.path.join(d, "f_order.npy"), np.asfortranarray(a))
    np.save(os.path.join(d, "big_endian.npy"), a.astype(">f8"))
    np.save(os.path.join(d, "int64.npy"), a.astype("<i8"))
    np.save(os.path.join(d, "vector.npy"), np.array([0.25, -1.5]))
    with open(os.path.join(d, "c_order.npy"), "rb") as fh:
        raw = fh.read()
    with open(os.path.join(d, "truncated.npy"), "wb") as fh:
        fh.write(raw[:-8])


def export_datasets():
    """Small demonstration datasets. Labels are exact (FCI) in STO-3G."""
    d = os.path.join(ROOT, "data/datasets")
    os.makedirs(d, exist_ok=True)
    H = run_scf(mol("H 0 0 0", spin=1)).e_tot
    Hep = run_scf(mol("He 0 0 0", charge=1, spin=1)).e_tot
    He_m = mol("He 0 0 0")
    He = fci.FCI(run_scf(He_m)).kernel()[0]
    H2_m = mol("H 0 0 0; H 0 0 1.4")
    mf = run_scf(H2_m)
    cis = fci.FCI(mf)
    H2, civec = cis.kernel()
    dm_mo = cis.make_rdm1(civec, mf.mo_coeff.shape[1], H2_m.nelec)
    dm_ao = mf.mo_coeff @ dm_mo @ mf.mo_coeff.T
    np.save(os.path.join(d, "h2_fci_dm.npy"), dm_ao)
    # in STO-3G the H2 density matrix is fixed by symmetry; 6-31G is not
    m631 = mol("H 0 0 0; H 0 0 1.4", basis="6-31g")
    mf631 = run_scf(m631)
    c631 = fci.FCI(mf631)
    vec631 = c631.kernel()[1]
    dm631 = c631.make_rdm1(vec631, mf631.mo_coeff.shape[1], m631.nelec)
    np.save(os.path.join(d, "h2_631g_fci_dm.npy"), mf631.mo_coeff @ dm631 @ mf631.mo_coeff.T)
    r = repr
    with open(os.path.join(d, "smoke.yaml"), "w") as fh:
        fh.write(f"""# Smoke-test training set (demonstration only). Labels are exact
# STO-3G energies in Hartree from tools/reference/make_reference_data.py.
format: 1
entries:
  - type: ip
    systems:
      - {{moldesc: "H 0 0 0", basis: sto-3g, charge: 0, spin: 1}}
      - {{moldesc: "H 0 0 0", basis: sto-3g, charge: 1, spin: 0}}
    true_val: {r(float(0.0 - H))}
  - type: ip
    systems:
      - {{moldesc: "He 0 0 0", basis: sto-3g, charge: 0, spin: 0}}
      - {{moldesc: "He 0 0 0", basis: sto-3g, charge: 1, spin: 1}}
    true_val: {r(float(Hep - He))}
  - type: ae
    systems:
      - {{moldesc: "H 0 0 0; H 0 0 1.4", basis: sto-3g}}
      - {{moldesc: "H 0 0 0", basis: sto-3g, spin: 1}}
      - {{moldesc: "H 0 0 0", basis: sto-3g, spin: 1}}
    true_val: {r(float(2 * H - H2))}
""")
    with open(os.path.join(d, "h2_dm.yaml"), "w") as fh:
        fh.write("""# H2 (R = 1.4 Bohr) FCI density matrices as array labels.
- type: dm
  systems:
    - {moldesc: "H 0 0 0; H 0 0 1.4", basis: sto-3g}
  true_val: h2_fci_dm.npy
- type: dm
  systems:
    - {moldesc: "H 0 0 0; H 0 0 1.4", basis: 6-31g}
  true_val: h2_631g_fci_dm.npy
""")


if __name__ == "__main__":
    import sys
    if len(sys.argv) > 1:
        for name in sys.argv[1:]:
            globals()["export_" + name]()
        sys.exit(0)
    export_basis("sto-3g", "sto-3g.json")
    export_basis("6-31g", "6-31g.json")
    export_lebedev()
    export_integrals()
    export_energies()
    export_functional_points()
