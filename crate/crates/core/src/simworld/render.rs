use super::scenario::{CellKind, Scenario};
use crate::geom::Heading;
use crate::Pose;

fn agent_glyph(h: Heading) -> char {
    match h {
        Heading::East => '>',
        Heading::North => '^',
        Heading::West => '<',
        Heading::South => 'v',
    }
}

/// ASCII frame with +y pointing up. Landmarks show as `*`, the agent as an arrow.
pub fn render_ascii(scenario: &Scenario, pose: &Pose) -> String {
    let agent = scenario.cell_of(&pose.position());
    let mut out = String::new();
    for y in (0..scenario.grid.height() as i64).rev() {
        for x in 0..scenario.grid.width() as i64 {
            let ch = if agent == Some((x, y)) {
                agent_glyph(pose.heading)
            } else if scenario.landmark_at((x, y)).is_some() {
                '*'
            } else {
                match scenario.grid.get((x, y)) {
                    Some(CellKind::Obstacle) => '#',
                    Some(CellKind::Glass) => 'g',
                    _ => '.',
                }
            };
            out.push(ch);
        }
        out.push('\n');
    }
    out
}
