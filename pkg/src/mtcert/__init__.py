"""High-confidence performance certificates for multi-task policies."""

from mtcert.bounds import (
    BinaryStats,
    BoundSpec,
    Method,
    PerTaskBound,
    RealStats,
    TaskRecord,
    compute_bounds,
)
from mtcert.certify import (
    Certificate,
    CertificateCurve,
    CertificateRequest,
    EpisodicRequest,
    best_certificate,
    certificate_curve,
    episodic_certificate,
)

__version__ = "0.1.0"

__all__ = [
    "BinaryStats",
    "BoundSpec",
    "Certificate",
    "CertificateCurve",
    "CertificateRequest",
    "EpisodicRequest",
    "Method",
    "PerTaskBound",
    "RealStats",
    "TaskRecord",
    "best_certificate",
    "certificate_curve",
    "compute_bounds",
    "episodic_certificate",
]
