//! Simulated crowds of LLM agents for game user research.

pub mod analysis;
pub mod experiencing;
pub mod feedback;
pub mod gateway;
pub mod onboarding;
pub mod pool;
pub mod rng;
pub mod screening;
pub mod study;
pub mod workers;
