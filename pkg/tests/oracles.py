"""Straight-line reference implementations used to cross-check the package.

Everything here is written with explicit loops over BS elements, users and
surface nodes, sharing only scene geometry (positions, frames, constants)
with the code under test.
"""
import numpy as np
from scipy.constants import epsilon_0, mu_0


def incident_fields(scene, bs_pos, node):
    d_vec = node - bs_pos
    d = np.sqrt(d_vec @ d_vec)
    g = np.exp(-1j * scene.k0 * d) / (4 * np.pi * d)
    chi = scene.polarization
    E = g * chi
    H = np.cross(d_vec / d, chi) * g / scene.eta0
    return E, H


def node_states(scene, table, s):
    """(ke, kh) of every surface node for configuration ``s``."""
    nodes, weights, patch = scene.quadrature_nodes()
    ke, kh = [], []
    for p in patch:
        if p < scene.P:
            ke.append(table.ke[s[p] - 1])
            kh.append(table.kh[s[p] - 1])
        else:
            ke.append(table.wall_ke)
            kh.append(table.wall_kh)
    return nodes, weights, ke, kh


def dense_channel(scene, table, s, users):
    """L x M channel: incident field -> sheet currents -> vector far field -> co-polar part."""
    omega = 2 * np.pi * scene.f0
    k0, eta0, chi, o = scene.k0, scene.eta0, scene.polarization, scene.origin
    nodes, weights, ke, kh = node_states(scene, table, s)
    out = np.zeros((len(users), scene.M), complex)
    for li, user in enumerate(users):
        r = np.asarray(user, float) - o
        R = np.linalg.norm(r)
        rhat = r / R
        for m, bs in enumerate(scene.bs_elements):
            acc = np.zeros(3, complex)
            for n, node in enumerate(nodes):
                E, H = incident_fields(scene, bs, node)
                je = np.zeros(3, complex)
                jh = np.zeros(3, complex)
                for d, ed in enumerate((scene.e1, scene.e2)):
                    je += 1j * omega * epsilon_0 * ke[n][d] * (E @ ed) * ed
                    jh += 1j * omega * mu_0 * kh[n][d] * (H @ ed) * ed
                phase = np.exp(1j * k0 * rhat @ (node - o))
                acc += weights[n] * phase * np.cross(rhat, eta0 * np.cross(rhat, je) + jh)
            out[li, m] = 1j * k0 / (4 * np.pi) * np.exp(-1j * k0 * R) / R * (acc @ chi)
    return out


def zf_throughput(upsilon, total_power, noise_power):
    """Per-user rates and max-min cost with equal-power zero forcing."""
    L = upsilon.shape[0]
    A = np.linalg.pinv(upsilon, rcond=1e-10)
    for b in range(A.shape[1]):
        A[:, b] *= np.sqrt(total_power / L) / np.linalg.norm(A[:, b])
    F = upsilon @ A
    rates = []
    for l in range(L):
        interference = sum(abs(F[l, j]) ** 2 for j in range(L) if j != l)
        sinr = abs(F[l, l]) ** 2 / (interference + L * noise_power / total_power)
        rates.append(np.log2(1 + sinr))
    worst = min(rates)
    return np.array(rates), (1 / worst if worst > 0 else np.inf)
