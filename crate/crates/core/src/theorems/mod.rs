//! Reference markets, counterexample builders, random market generators, and
//! the claim-verification harness.

pub mod builders;
pub mod examples;
pub mod gen;
pub mod verify;

pub use builders::{
    counterexample_from_altruism_violation, counterexample_from_diversity_violation, BuildError,
    CounterexampleReport, WitnessShape,
};
pub use examples::{
    crowding_market, crowding_market_outcome, SplitCoupleFamily, ThreeHospitalFamily,
};
pub use gen::{
    altruistic_pair_order, random_altruism_violating_market, random_altruistic_market,
    random_averse_market, random_diversity_violating_market, random_market,
};
pub use verify::{verify_all, verify_claim, Budget, ClaimId, Failure, Outcome, WitnessReport};
