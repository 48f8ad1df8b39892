//! Per-view 2D meshing: over-segmentation into color-coherent polygons,
//! constrained Delaunay triangulation with split vertices, and clustering of
//! triangles into supported components.

mod boundary;
mod cluster;
mod image;
mod segment;
mod triangulate;

pub use cluster::{cluster_regions, SupportClusters};
pub use image::RgbImage;
pub use segment::{color_distance, oversegment, Region, SegmentParams, Segmentation};
pub use triangulate::{triangulate, AdjacencyRecord, TriangleLocator, ViewMesh};
