"""Direction finding and Cramer-Rao bounds for continuous aperture arrays."""

from .capa_music import (
    DoaEstimate,
    MusicSpectrum,
    NoiseSubspace,
    ReducedCovariance,
    ScanRanges,
    assemble_k,
    estimate,
    find_peaks,
    noise_subspace,
    scan,
    spectrum_value,
)
from .crlb import (
    CrlbReport,
    FimKnown,
    FimUnknown,
    SpdaConfig,
    crlb_capa_closed_form,
    crlb_known,
    crlb_report,
    crlb_spda,
    crlb_unknown,
    fim_known,
    fim_unknown,
)
from .errors import ConfigError, NumericError, SingularMatrixError, UnidentifiableError
from .geometry import AngleConvention, Aperture
from .quadrature import QuadratureGrid, gauss_legendre, integrate_2d, make_grid, tensorize
from .scene import FieldSamples, Scene, Target, synthesize_field, synthesize_snapshots

__version__ = "0.1.0"
