"""Verilog generation for security policies."""
from .expr import LoweringError
from .generate import (CENTRAL_MODULE, CodegenError, PortConflictError, RtlArtifact, RtlPort,
                       UnknownPortError, UnresolvedSignalError, build_central_module, build_ip_wrapper, default_inner_ports,
                       policy_to_logic, write_rtl)
from .validate import RtlFinding, validate_rtl

__all__ = [
    "LoweringError", "CENTRAL_MODULE", "CodegenError", "PortConflictError", "RtlArtifact",
    "RtlPort", "UnknownPortError", "UnresolvedSignalError", "build_central_module", "build_ip_wrapper",
    "default_inner_ports", "policy_to_logic", "write_rtl", "RtlFinding", "validate_rtl",
]
