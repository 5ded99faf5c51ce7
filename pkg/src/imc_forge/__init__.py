"""imc-forge: analytical cost modeling and mapping exploration for SRAM
analog/digital in-memory-computing DNN accelerators."""

from .cost_model import (CycleCounts, DerivedGeometry, EnergyBreakdown, MacroSpec,
                         PeakResult, adc_energy, adder_tree_energy,
                         adder_tree_fa_count, cell_energy, dac_energy, load_arch,
                         logic_energy, peak_performance, total_energy)
from .dse import (DEFAULT_HIERARCHY, LayerResult, MemoryLevelSpec, NetworkResult,
                  TrafficReport, evaluate_network, optimize_layer,
                  scale_to_equal_cells, traffic_for, validate_against)
from .errors import (ImcForgeError, InfeasibleLayerError, InputError,
                     InsufficientDataError, MappingError, MappingRejected, ModelError)
from .fitting import fit_cinv, fit_dac_constant, modeled_energy_per_op
from .mapping import (MapperConfig, SpatialMapping, TemporalMapping, Utilization,
                      enumerate_spatial, extract_cycles, temporal_mappings,
                      utilization)
from .tech import (FitDatapoint, LinearFit, ModelConstants, TechnologyProfile,
                   load_datapoints, load_tech_config, profile_for, save_tech_config)
from .workload import LayerWorkload, Network, load_network, total_macs

__version__ = "0.1.0"
