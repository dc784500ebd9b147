//! Asset-material pipeline, tabletop layout generation and policy evaluation
//! harness for a photorealistic manipulation benchmark.
//!
//! The asset pipeline runs render → segment → retrieve → bake → qc:
//! [`render`] produces 32 G-buffer views per asset, [`segment`] turns oracle
//! part proposals into per-view masks, [`material`] picks a PBR material per
//! part, [`uv`] projects the masks into UV space and bakes atlases, and
//! [`qc`] applies scale, density and light-bake checks. [`layout`] places
//! objects on a table from a scene graph; [`eval`] scores trajectory logs and
//! correlates simulated with real success rates. [`pipeline`] chains the
//! stages behind a single config file.

pub mod eval;
pub mod geom;
pub mod imaging;
pub mod layout;
pub mod material;
pub mod mesh;
pub mod oracle;
pub mod pipeline;
pub mod qc;
pub mod render;
pub mod segment;
pub mod uv;
