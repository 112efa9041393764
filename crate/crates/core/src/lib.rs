pub mod compare;
pub mod energy;
pub mod engine;
pub mod event;
pub mod mme;
pub mod mobility;
pub mod node;
pub mod phy;
pub mod radio;
pub mod report;
pub mod rng;
pub mod scenario;
pub mod traffic;
pub mod world;
