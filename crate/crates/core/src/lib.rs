//! Frequency-domain design and time-domain analysis of reset controllers.
//!
//! The numeric core is generic over the scalar type ([`Real`], implemented for
//! `f32` and `f64`); the aliases at the crate root fix it to `f64`.

pub mod campaign;
pub mod cglp;
pub mod describing;
pub mod error;
pub mod linalg;
pub mod loop_shaping;
pub mod model;
pub mod scalar;
pub mod sim;
pub mod spectral;
pub mod stability;

pub use campaign::{run_campaign, CampaignReport, CampaignSpec, DesignMode, ReportEntry};
pub use cglp::{build_cglp, gain_flatness, phase_lead_at, CgLpElement, CgLpOrder, CgLpSpec, CgLpSpecFile};
pub use describing::{
    compute_alpha, compute_alpha_with, df_response, df_sweep, phase_lag_at, AlphaMethod, FrequencyGrid, FrequencyResponse,
};
pub use error::{Error, Result};
pub use loop_shaping::{
    design_bandwidth, design_tracking_precision, open_loop_df, pid_response, solve_scale_a, ControllerDesign, DesignRequest,
    Family, PhaseAccounting, PidSpec, PlantModel,
};
pub use model::{
    generalized_integrator, linear_response, make_element, series, ElementKind, ElementSpec, ElementSpecFile,
    ResetController, StateSpace, TransferFunction,
};
pub use stability::{
    build_closed_loop, find_certificate, verify_certificate, ClosedLoop, SearchOptions, StabilityCertificate, StabilityReport,
    Verdict,
};
pub use sim::{
    make_feedforward, make_reference, metrics, simulate, simulate_open_loop, Metrics, SimConfig, SimulationTrace,
};
pub use spectral::{estimate_frf, first_harmonic, make_chirp, SpectralEstimate, WindowSpec};
pub use scalar::{cabs, carg, cpolar, db, from_db, logspace, Cplx, Real};

pub type StateSpace64 = StateSpace<f64>;
pub type ResetController64 = ResetController<f64>;
pub type ElementSpec64 = ElementSpec<f64>;
pub type ControllerDesign64 = ControllerDesign<f64>;
pub type PlantModel64 = PlantModel<f64>;
