pub mod budget;
pub mod htmlscan;
pub mod http;
pub mod lab;
pub mod llm;
pub mod memory;
pub mod orchestrator;
pub mod payload;
pub mod agents;
pub mod recon;
pub mod state;
pub mod verifier;
