//! The benchmark problems: reservoir swirl, lid-driven cavity, and the
//! contracted channel.

use crate::assembly::{BcKind, ProblemData};
use crate::error::Result;
use crate::mesh::{build_channel, build_crossed_rect, BoundaryTag, Mesh, Rect};

/// Rotational body force over the unit square with homogeneous Dirichlet
/// walls.
pub fn reservoir(nx: usize) -> Result<(Mesh, ProblemData)> {
    let mesh = build_crossed_rect(nx, nx, Rect::UNIT)?;
    let data = ProblemData::new(
        |x| [300.0 * (x[1] - 0.5), 300.0 * (0.5 - x[0])],
        |_| [0.0, 0.0],
    );
    Ok((mesh, data))
}

/// Lid-driven cavity: unit tangential velocity on the open top edge, no
/// body force. Velocity dofs are cell-wise constants, so the lid value is
/// only ever sampled at interior edge quadrature points and the corner
/// ambiguity never materializes.
pub fn cavity(nx: usize) -> Result<(Mesh, ProblemData)> {
    let mesh = build_crossed_rect(nx, nx, Rect::UNIT)?;
    let data = ProblemData::new(
        |_| [0.0, 0.0],
        |x| if x[1] > 1.0 - 1e-12 { [1.0, 0.0] } else { [0.0, 0.0] },
    );
    Ok((mesh, data))
}

/// Channel with a contraction: parabolic inflow, no-slip walls, stress-free
/// outflow.
pub fn channel(resolution: usize) -> Result<(Mesh, ProblemData)> {
    channel_with_geometry(4.0, 1.0, 0.5, resolution)
}

pub fn channel_with_geometry(
    length: f64,
    half_height: f64,
    ratio: f64,
    resolution: usize,
) -> Result<(Mesh, ProblemData)> {
    let mesh = build_channel(length, half_height, ratio, resolution)?;
    let hh = half_height;
    let data = ProblemData::new(
        |_| [0.0, 0.0],
        move |x| {
            if x[0] < 1e-12 {
                [1.0 - (x[1] / hh) * (x[1] / hh), 0.0]
            } else {
                [0.0, 0.0]
            }
        },
    )
    .with_bc(|tag| {
        if tag == BoundaryTag::Outflow {
            BcKind::StressFree
        } else {
            BcKind::DirichletFlux
        }
    });
    Ok((mesh, data))
}
