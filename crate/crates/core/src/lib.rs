pub mod car_following;
pub mod controllability;
pub mod region_scanner;
pub mod simulator;
pub mod string_stability;
pub mod system_builder;

pub use car_following::{DriverParams, Equilibrium, LinearGains};
pub use region_scanner::{AxisRange, CellClass, GainKind, GainRef, ScanSpec, StabilityChart};
pub use simulator::{Perturbation, PerturbationKind, SimulationResult};
pub use string_stability::{OmegaGrid, StabilityVerdict, TriState};
pub use system_builder::{FeedbackGains, LccTopology, LccVariant, StateSpace};
