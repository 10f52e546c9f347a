"""Continuous-measurement spin-state tomography toolkit.

Simulates weak continuous measurement of a driven spin-F ensemble,
propagates the measured observable through the driven dissipative
dynamics, designs entropy-optimal control waveforms, and reconstructs
the initial density matrix from noisy records by regularized Gaussian
inversion.
"""

from .algebra import (
    DegenerateEstimateError,
    OperatorVector,
    SpinSystem,
    cat_state,
    devectorize,
    fidelity,
    gell_mann_basis,
    make_spin_system,
    project_positive,
    random_density_matrix,
    spin_matrices,
    stretched_state,
    vectorize,
)
from .waveform import (
    AmplitudeScaledWaveform,
    ControlWaveform,
    load_waveform,
    random_waveform,
    save_waveform,
)
from .dynamics import (
    ISOTROPIC_PUMPING,
    LOSS_ONLY,
    Generator,
    NumericalFailureError,
    ObservableHistory,
    PhysicsParams,
    build_generator,
    build_hamiltonian,
    observable_history,
    step_propagator,
)
from .measurement import (
    MeasurementRecord,
    SnrSpec,
    apply_filter,
    load_record,
    moving_average,
    save_record,
    sigma_from_snr,
    simulate_record,
)
from .estimation import (
    InformationMatrix,
    NoInformationError,
    ReconstructionResult,
    accumulate,
    entropy,
    estimate,
    information_rank,
    load_density_matrix,
    model_information,
    reconstruct,
    save_density_matrix,
)
from .design import (
    DesignResult,
    SearchConfig,
    coordinate_search,
    design_objective,
    greedy_multirun,
)

__version__ = "0.1.0"
