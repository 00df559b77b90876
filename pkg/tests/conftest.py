"""Shared fixtures and independent oracles for the test suite."""

import math

import numpy as np
import pytest

from nodalrel import (
    MU_EARTH,
    ClassicalElements,
    elements_to_cartesian,
    pci_to_pqw,
    rot_z,
)

# The two fixed orbits used throughout the validation experiments.
EL1 = ClassicalElements(a=8.9e3, e=0.5, i=math.radians(10.0),
                        raan=math.radians(20.0), argp=0.0,
                        nu=math.radians(30.0))
EL2 = ClassicalElements(a=6.8e3, e=0.1, i=math.radians(40.0),
                        raan=math.radians(90.0), argp=math.radians(30.0),
                        nu=math.radians(70.0))


@pytest.fixture
def validation_pair():
    return EL1, EL2


def random_elements(rng, a_range=(7e3, 5e4), e_range=(0.01, 0.8),
                    i_range=(0.05, 3.0)) -> ClassicalElements:
    return ClassicalElements(
        a=rng.uniform(*a_range), e=rng.uniform(*e_range),
        i=rng.uniform(*i_range), raan=rng.uniform(-math.pi, math.pi),
        argp=rng.uniform(-math.pi, math.pi), nu=rng.uniform(-math.pi, math.pi))


def random_pair(rng, min_gamma=1e-4, **kwargs):
    """Random non-retrograde, noncoplanar element pair."""
    from nodalrel import RetrogradeSingularity, relative_orientation
    while True:
        el1 = random_elements(rng, **kwargs)
        el2 = random_elements(rng, **kwargs)
        try:
            rel = relative_orientation(el1, el2)
        except RetrogradeSingularity:
            continue
        if rel.gamma >= min_gamma:
            return el1, el2


def orbit_normal(el: ClassicalElements) -> np.ndarray:
    """Unit orbit normal in PCI (third row of the PCI->PQW DCM)."""
    return pci_to_pqw(el)[2]


def cartesian_node_oracle(el1: ClassicalElements, el2: ClassicalElements,
                          mu: float = MU_EARTH):
    """Independent relative-node geometry from Cartesian states.

    The ascending relative node (satellite 2 rising through plane 1) lies
    along h1 x h2; angles are measured in each orbit plane from that
    direction, and gamma is the angle between the plane normals.
    """
    s1 = elements_to_cartesian(el1, mu)
    s2 = elements_to_cartesian(el2, mu)
    h1 = np.cross(s1.r, s1.v)
    h2 = np.cross(s2.r, s2.v)
    h1 /= np.linalg.norm(h1)
    h2 /= np.linalg.norm(h2)
    node = np.cross(h1, h2)
    node /= np.linalg.norm(node)

    def signed_angle(u, w, axis):
        return math.atan2(float(np.cross(u, w) @ axis), float(u @ w))

    gamma = math.atan2(float(np.linalg.norm(np.cross(h1, h2))),
                       float(h1 @ h2))
    theta1 = signed_angle(node, s1.r / np.linalg.norm(s1.r), h1)
    theta2 = signed_angle(node, s2.r / np.linalg.norm(s2.r), h2)
    return gamma, theta1, theta2, node


def rtn1_chain_oracle(el1: ClassicalElements,
                      el2: ClassicalElements) -> np.ndarray:
    """RTN2->RTN1 DCM by the full classical-element rotation chain."""
    return (rot_z(el1.nu) @ pci_to_pqw(el1)
            @ pci_to_pqw(el2).T @ rot_z(-el2.nu))


def rtn_frame(r: np.ndarray, v: np.ndarray) -> np.ndarray:
    """PCI->RTN DCM built directly from a Cartesian state."""
    rhat = r / np.linalg.norm(r)
    nhat = np.cross(r, v)
    nhat = nhat / np.linalg.norm(nhat)
    return np.vstack([rhat, np.cross(nhat, rhat), nhat])


def cartesian_relative_state(el1, el2, mu=MU_EARTH):
    """RTN1 relative position and component-rate velocity from Cartesian
    differencing (the transport-rate term handles the rotating frame)."""
    s1 = elements_to_cartesian(el1, mu)
    s2 = elements_to_cartesian(el2, mu)
    basis = rtn_frame(s1.r, s1.v)
    dr = basis @ (s2.r - s1.r)
    omega = np.cross(s1.r, s1.v) / float(s1.r @ s1.r)
    dv = basis @ ((s2.v - s1.v) - np.cross(omega, s2.r - s1.r))
    return dr, dv
