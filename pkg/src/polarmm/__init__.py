"""Polar codes for compound channels under mismatched decoding."""

from .channels import (
    Bdmc,
    ChannelError,
    ChannelPair,
    bec,
    bsc,
    mismatched_info,
    pe_single_use,
    symmetric_capacity,
)
from .codec import MetricTable, PolarCode, encode, sc_decode, simulate_frames
from .compound import ChannelFamily, compound_run, family_min_channel, one_sided_check
from .construct import InformationSet, construct_exact, construct_mc, scd_union_bound
from .polarize import MergePolicy, PairDensity, evolve_all, pair_minus, pair_plus, reduce, synthesize

__version__ = "0.1.0"
