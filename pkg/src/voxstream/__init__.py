"""Streaming rasterization of component-based volumetric test data."""

from .model import (Aabb, CombineOp, Component, ContractError, ScalarType, SweepStats, VoxelGrid,
                    aabb_contains, aabb_volume, combine_all, linear_index)
from .functions import Capsule, Constant, Ramp, SphericalShadow, constant_component
from .index import BoxIndex, build_index, stab_query
from .rasterize import (rasterize, rasterize_bruteforce, rasterize_component_order,
                        rasterize_nested_sweeps, rasterize_spatial_index)
from .sinks import (ChecksumSink, MemSink, NullSink, RawFileSink, SinkOrderError, checksum_sink,
                    mem_sink, null_sink, raw_file_sink, read_raw_volume, write_constant_volume)
from .synthetic import ExperimentSpec, generate_components
from .phantom import PhantomOptions, ShadowSpec, VesselSegment, rasterize_phantom

__version__ = "0.1.0"
