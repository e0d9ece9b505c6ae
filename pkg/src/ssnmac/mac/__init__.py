"""802.11 / 802.11p MAC models built on the SSN kernel."""
from .models import (
    IMMEDIATE_PRIORITIES, RATE_UNIT, STATION_PLACES, BurstNoise, Ideal, ModelClasses, NetworkSpec,
    Poisson, Saturated, Variant, build, build_80211, build_80211p,
)
from .params import (
    MAX_BACKOFF, MAX_TX, N_STAGES, BackoffMapping, MacParams, Priority, backoff_stage_bounds,
    cw_window, default_bm0, legacy_cw, legacy_mapping, nominal_max_btr, stages_for_window,
)
