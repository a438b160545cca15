"""Partition norms, moment functionals and Monte Carlo checks for Gaussian chaoses."""
from .tensor import Tensor, make_tensor, load_tensor, save_tensor, unfold, contract_block
from .partitions import Partition, enumerate_partitions, all_partitions, parse_partition, refines
from .norms import SolverConfig, NormResult, partition_norm, compute_norm_table, injective_norm_oracle, s_k

__version__ = "0.1.0"
