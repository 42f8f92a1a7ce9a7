"""Unit conversions applied once at configuration boundaries."""

import math

import numpy as np


def dbm_to_watt(dbm):
    return 10.0 ** ((np.asarray(dbm, dtype=float) - 30.0) / 10.0)


def watt_to_dbm(watt):
    return 10.0 * np.log10(np.asarray(watt, dtype=float)) + 30.0


def db_to_linear(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


def linear_to_db(x):
    return 10.0 * np.log10(np.asarray(x, dtype=float))


def noise_variance(psd_dbm_hz, bandwidth_hz=1.0):
    """Complex noise variance sigma^2 from a per-component PSD sigma^2/2."""
    return 2.0 * float(dbm_to_watt(psd_dbm_hz)) * bandwidth_hz


DISC_RADIUS_1KM2 = math.sqrt(1e6 / math.pi)
