import itertools
import math

import numpy as np

import ks_finite._kscore as kscore

TRIAL_CSV_HEADER = "trial,triad,r1,r2,r3\n"


def rotated_frames_set(name, angles_deg):
    """Frames rotated about the z axis, all of them share z"""
    directions = [(0.0, 0.0, 1.0)]
    for angle in angles_deg:
        a = math.radians(angle)
        directions.append((math.cos(a), math.sin(a), 0.0))
        directions.append((-math.sin(a), math.cos(a), 0.0))
    return kscore.make_ks_set(name, directions)


def brute_force_min_violated(ks_set):
    n = len(ks_set.directions)
    values = np.array(list(itertools.product((0, 1), repeat=n)), dtype=np.int8)
    violated = np.zeros(len(values), dtype=np.int64)
    for triad in ks_set.triads:
        zeros = np.count_nonzero(values[:, list(triad)] == 0, axis=1)
        violated += zeros != 1
    return int(violated.min())


def sub_set(ks_set, max_directions):
    """The leading triads of `ks_set`, as long as they use at most
    `max_directions` directions"""
    used = []
    triads = []
    for triad in ks_set.triads:
        new = [i for i in triad if i not in used]
        if len(used) + len(new) > max_directions:
            continue
        used.extend(new)
        triads.append([used.index(i) for i in triad])
    directions = [ks_set.directions[i] for i in used]
    return kscore.make_ks_set(f"{ks_set.name}-sub", directions, triads)


def trial_csv(rows):
    lines = [f"{n},{triad},{r1},{r2},{r3}\n" for n, (triad, (r1, r2, r3)) in enumerate(rows)]
    return TRIAL_CSV_HEADER + "".join(lines)
