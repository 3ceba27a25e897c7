//! Scenario geometry: road layouts, building rectangles, and the
//! segment-vs-rectangle test behind every line-of-sight query.

use serde::{Deserialize, Serialize};

use crate::model::Vec2;

/// Axis-aligned rectangle, closed on all sides.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl Rect {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Self {
        debug_assert!(x_min <= x_max && y_min <= y_max);
        Rect {
            x_min,
            y_min,
            x_max,
            y_max,
        }
    }

    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= self.x_min && p.x <= self.x_max && p.y >= self.y_min && p.y <= self.y_max
    }

    fn contains_strict(&self, p: Vec2) -> bool {
        p.x > self.x_min && p.x < self.x_max && p.y > self.y_min && p.y < self.y_max
    }
}

/// True when the open segment a-b passes through the interior of `rect`.
///
/// Grazing contact does not block: a segment that only touches a corner or
/// slides along a wall has zero interior overlap and stays line-of-sight.
pub fn segment_intersects_rect(a: Vec2, b: Vec2, rect: &Rect) -> bool {
    // Liang-Barsky clip of the parametric segment against the closed rect.
    let dx = b.x - a.x;
    let dy = b.y - a.y;
    let mut t0 = 0.0f64;
    let mut t1 = 1.0f64;
    let checks = [
        (-dx, a.x - rect.x_min),
        (dx, rect.x_max - a.x),
        (-dy, a.y - rect.y_min),
        (dy, rect.y_max - a.y),
    ];
    for (p, q) in checks {
        if p == 0.0 {
            if q < 0.0 {
                return false; // parallel and outside this slab
            }
        } else {
            let r = q / p;
            if p < 0.0 {
                if r > t1 {
                    return false;
                }
                if r > t0 {
                    t0 = r;
                }
            } else {
                if r < t0 {
                    return false;
                }
                if r < t1 {
                    t1 = r;
                }
            }
        }
    }
    if t0 >= t1 {
        return false; // corner touch collapses to a single point
    }
    // Positive overlap with the closed rect; require interior passage so a
    // segment running along a wall does not count as blocked.
    let tm = 0.5 * (t0 + t1);
    rect.contains_strict(Vec2::new(a.x + tm * dx, a.y + tm * dy))
}

/// Street axis in the grid layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
}

/// One street corridor of the grid: a full-length band of free space.
#[derive(Debug, Clone, Copy)]
pub struct Street {
    pub axis: Axis,
    /// Coordinate of the centerline on the perpendicular axis.
    pub center: f64,
    /// Corridor length along its axis.
    pub length: f64,
    pub width: f64,
}

/// Manhattan grid geometry: building blocks separated by streets, with a
/// street ring around the outer blocks.
#[derive(Debug, Clone)]
pub struct GridGeometry {
    pub blocks_x: u32,
    pub blocks_y: u32,
    pub block_w: f64,
    pub block_h: f64,
    pub street_width: f64,
    pub buildings: Vec<Rect>,
    /// Vertical streets first (axis Y), then horizontal (axis X), each in
    /// ascending centerline order.
    pub streets: Vec<Street>,
    pub extent_x: f64,
    pub extent_y: f64,
}

impl GridGeometry {
    pub fn new(blocks_x: u32, blocks_y: u32, block_w: f64, block_h: f64, street_width: f64) -> Self {
        let extent_x = blocks_x as f64 * block_w + (blocks_x + 1) as f64 * street_width;
        let extent_y = blocks_y as f64 * block_h + (blocks_y + 1) as f64 * street_width;
        let mut buildings = Vec::new();
        for i in 0..blocks_x {
            for j in 0..blocks_y {
                let x0 = street_width + i as f64 * (block_w + street_width);
                let y0 = street_width + j as f64 * (block_h + street_width);
                buildings.push(Rect::new(x0, y0, x0 + block_w, y0 + block_h));
            }
        }
        let mut streets = Vec::new();
        for i in 0..=blocks_x {
            streets.push(Street {
                axis: Axis::Y,
                center: street_width / 2.0 + i as f64 * (block_w + street_width),
                length: extent_y,
                width: street_width,
            });
        }
        for j in 0..=blocks_y {
            streets.push(Street {
                axis: Axis::X,
                center: street_width / 2.0 + j as f64 * (block_h + street_width),
                length: extent_x,
                width: street_width,
            });
        }
        GridGeometry {
            blocks_x,
            blocks_y,
            block_w,
            block_h,
            street_width,
            buildings,
            streets,
            extent_x,
            extent_y,
        }
    }

    /// Indices of the street corridors whose band contains `p`. A point at
    /// an intersection lies in one vertical and one horizontal corridor.
    pub fn streets_containing(&self, p: Vec2) -> Vec<usize> {
        let half = self.street_width / 2.0;
        self.streets
            .iter()
            .enumerate()
            .filter(|(_, s)| {
                let perp = match s.axis {
                    Axis::Y => p.x,
                    Axis::X => p.y,
                };
                (perp - s.center).abs() <= half
            })
            .map(|(i, _)| i)
            .collect()
    }

    /// Centerline coordinates of the cross streets intersecting a street of
    /// the given axis, in ascending order along that street.
    pub fn cross_centers(&self, axis: Axis) -> Vec<f64> {
        self.streets
            .iter()
            .filter(|s| s.axis != axis)
            .map(|s| s.center)
            .collect()
    }

    /// Rectangle spanning the central `nx x ny` blocks plus their bounding
    /// streets; used as the default statistics region.
    pub fn central_region(&self, nx: u32, ny: u32) -> Rect {
        let nx = nx.min(self.blocks_x);
        let ny = ny.min(self.blocks_y);
        let skip_x = (self.blocks_x - nx) / 2;
        let skip_y = (self.blocks_y - ny) / 2;
        let x0 = skip_x as f64 * (self.block_w + self.street_width);
        let y0 = skip_y as f64 * (self.block_h + self.street_width);
        let x1 = x0 + nx as f64 * (self.block_w + self.street_width) + self.street_width;
        let y1 = y0 + ny as f64 * (self.block_h + self.street_width) + self.street_width;
        Rect::new(x0, y0, x1.min(self.extent_x), y1.min(self.extent_y))
    }
}

/// Relative street placement of two positions in the grid, used to split
/// urban perception statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StreetRelation {
    SameStreet,
    Perpendicular,
}

/// Scenario geometry as seen by sensing, propagation, and metrics.
#[derive(Debug, Clone)]
pub enum Layout {
    /// Straight multi-lane road along +x; no obstructions anywhere.
    Highway { length: f64, lanes: u32 },
    /// Manhattan grid with obstructing building blocks.
    Grid(GridGeometry),
    /// Trajectory replay over open ground; no obstructions.
    Open { bounds: Rect },
}

impl Layout {
    /// True when the segment a-b crosses no building interior.
    pub fn line_of_sight(&self, a: Vec2, b: Vec2) -> bool {
        match self {
            Layout::Highway { .. } | Layout::Open { .. } => true,
            Layout::Grid(g) => !g
                .buildings
                .iter()
                .any(|rect| segment_intersects_rect(a, b, rect)),
        }
    }

    /// Street relation between two positions. Everything on the highway or
    /// open ground counts as same-street.
    pub fn street_relation(&self, a: Vec2, b: Vec2) -> StreetRelation {
        match self {
            Layout::Highway { .. } | Layout::Open { .. } => StreetRelation::SameStreet,
            Layout::Grid(g) => {
                let sa = g.streets_containing(a);
                let sb = g.streets_containing(b);
                if sa.iter().any(|i| sb.contains(i)) {
                    StreetRelation::SameStreet
                } else {
                    StreetRelation::Perpendicular
                }
            }
        }
    }

    pub fn bounds(&self) -> Rect {
        match self {
            Layout::Highway { length, lanes } => {
                Rect::new(0.0, 0.0, *length, *lanes as f64 * 5.0 + 5.0)
            }
            Layout::Grid(g) => Rect::new(0.0, 0.0, g.extent_x, g.extent_y),
            Layout::Open { bounds } => *bounds,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rect() -> Rect {
        Rect::new(10.0, 10.0, 20.0, 20.0)
    }

    #[test]
    fn segment_through_interior_blocks() {
        assert!(segment_intersects_rect(
            Vec2::new(0.0, 0.0),
            Vec2::new(30.0, 30.0),
            &rect()
        ));
    }

    #[test]
    fn segment_outside_does_not_block() {
        assert!(!segment_intersects_rect(
            Vec2::new(0.0, 0.0),
            Vec2::new(30.0, 5.0),
            &rect()
        ));
    }

    #[test]
    fn corner_touch_does_not_block() {
        // Passes exactly through the (10, 20) corner.
        assert!(!segment_intersects_rect(
            Vec2::new(0.0, 10.0),
            Vec2::new(20.0, 30.0),
            &rect()
        ));
    }

    #[test]
    fn corner_cut_blocks() {
        // Clips the corner region just inside the (10, 20) corner.
        assert!(segment_intersects_rect(
            Vec2::new(0.0, 9.0),
            Vec2::new(20.0, 29.0),
            &rect()
        ));
    }

    #[test]
    fn wall_slide_does_not_block() {
        assert!(!segment_intersects_rect(
            Vec2::new(0.0, 10.0),
            Vec2::new(30.0, 10.0),
            &rect()
        ));
    }

    #[test]
    fn segment_fully_inside_blocks() {
        assert!(segment_intersects_rect(
            Vec2::new(12.0, 12.0),
            Vec2::new(18.0, 18.0),
            &rect()
        ));
    }

    #[test]
    fn grid_geometry_counts() {
        let g = GridGeometry::new(3, 2, 100.0, 50.0, 10.0);
        assert_eq!(g.buildings.len(), 6);
        assert_eq!(g.streets.len(), 4 + 3);
        assert!((g.extent_x - (300.0 + 40.0)).abs() < 1e-9);
        assert!((g.extent_y - (100.0 + 30.0)).abs() < 1e-9);
    }

    #[test]
    fn grid_los_same_street_true() {
        let g = GridGeometry::new(3, 3, 100.0, 50.0, 10.0);
        let layout = Layout::Grid(g);
        // Both on the first horizontal street centerline.
        let a = Vec2::new(20.0, 5.0);
        let b = Vec2::new(200.0, 5.0);
        assert!(layout.line_of_sight(a, b));
        assert_eq!(layout.street_relation(a, b), StreetRelation::SameStreet);
    }

    #[test]
    fn grid_los_diagonal_blocked() {
        let g = GridGeometry::new(3, 3, 100.0, 50.0, 10.0);
        let layout = Layout::Grid(g);
        // Perpendicular streets, diagonal across a block interior.
        let a = Vec2::new(5.0, 40.0); // on first vertical street
        let b = Vec2::new(60.0, 5.0); // on first horizontal street
        assert!(!layout.line_of_sight(a, b));
        assert_eq!(layout.street_relation(a, b), StreetRelation::Perpendicular);
    }

    #[test]
    fn grid_intersection_square_is_clear() {
        let g = GridGeometry::new(3, 3, 100.0, 50.0, 10.0);
        let layout = Layout::Grid(g);
        // Both endpoints inside the intersection of the first streets.
        let a = Vec2::new(2.0, 2.0);
        let b = Vec2::new(8.0, 8.0);
        assert!(layout.line_of_sight(a, b));
        assert_eq!(layout.street_relation(a, b), StreetRelation::SameStreet);
    }

    #[test]
    fn central_region_of_full_grid_is_whole_area() {
        let g = GridGeometry::new(3, 3, 100.0, 50.0, 10.0);
        let region = g.central_region(3, 3);
        assert!((region.x_min - 0.0).abs() < 1e-9);
        assert!((region.x_max - g.extent_x).abs() < 1e-9);
    }
}
