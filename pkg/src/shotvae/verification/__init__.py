from .propositions import (
    PROP_IDS,
    PropositionReport,
    run_propositions,
    verify_prop_a1,
    verify_prop_b2,
    verify_prop_c3,
    verify_prop_d4,
    verify_prop_e5,
    verify_prop_e6,
)

__all__ = [
    "PROP_IDS",
    "PropositionReport",
    "run_propositions",
    "verify_prop_a1",
    "verify_prop_b2",
    "verify_prop_c3",
    "verify_prop_d4",
    "verify_prop_e5",
    "verify_prop_e6",
]
