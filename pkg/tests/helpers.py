"""Shared channel builders for the test modules."""

from zpotfs.channel import discretize, eva_paths, random_paths


def random_spread(dims, rng, n_paths=3, max_doppler=1.5, integer=False):
    paths = random_paths(dims, min(n_paths, dims.l_max + 1), rng, max_doppler=max_doppler,
                         integer_doppler=integer)
    return discretize(paths, "integer" if integer else "fractional")


def eva_spread(dims, rng, max_doppler_hz=1875.0):
    return discretize(eva_paths(dims, max_doppler_hz, rng))
