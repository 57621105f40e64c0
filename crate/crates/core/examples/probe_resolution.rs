use canopy_core::so3_grid::{generate_grid, grid_resolution};

fn main() {
    for level in 0..=2u32 {
        let grid = generate_grid(level).unwrap();
        let res = grid_resolution(&grid, 10_000, 2024);
        println!("level {level}: n = {}, resolution = {res:.6}", grid.len());
    }
}
