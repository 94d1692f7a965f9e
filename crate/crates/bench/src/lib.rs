//! Desk fixtures shared by the benchmarks.

use fracbubble::bubble::{AnsatzConfig, MeshOptions, ReductionSystem};
use fracbubble::constants::resolve_constants;
use fracbubble::domain::{GradedMeshSpec, Grid, LineGrid};
use fracbubble::operators::{build_operator, DiscreteOperator};
use fracbubble::{ConstantSet, Criticality, DomainSpec, FracParams, OperatorKind, Result};

pub fn desk_constants() -> Result<ConstantSet> {
    resolve_constants(&FracParams::critical(1, 0.3)?, 1e-10)
}

/// Restricted operator on `(-1, 1)` with a graded mesh of about `nodes` points.
pub fn restricted_interval(nodes: usize) -> Result<DiscreteOperator> {
    let d = DomainSpec::Interval { a: -1.0, b: 1.0 };
    let mesh = GradedMeshSpec::new(-1.0, 1.0, 1e-3, 0.1, 0.05).build_with_count(nodes)?;
    build_operator(&d, &FracParams::critical(1, 0.3)?, Grid::Line(LineGrid::new(mesh, true)?), OperatorKind::Restricted)
}

/// Single-bubble reduction system at `eps` on `(-1, 1)`.
pub fn reduction_system(consts: &ConstantSet, eps: f64, nodes: Option<usize>) -> Result<ReductionSystem> {
    let cfg = AnsatzConfig::new(
        FracParams::new(1, 0.3, Criticality::Subcritical, eps)?,
        DomainSpec::Interval { a: -1.0, b: 1.0 },
        vec![vec![0.1]],
        vec![1.2],
    )?;
    let opts = match nodes {
        Some(n) => MeshOptions::default().with_nodes(n),
        None => MeshOptions::default(),
    };
    ReductionSystem::for_ansatz(&cfg, consts, &opts, 0.8)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_build() {
        let c = desk_constants().unwrap();
        assert_eq!(restricted_interval(200).unwrap().grid().len(), 200);
        assert_eq!(reduction_system(&c, 0.04, Some(300)).unwrap().nodes().len(), 300);
    }
}
