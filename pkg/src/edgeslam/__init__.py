"""Edge-aware lightweight monocular SLAM.

Subpackage layout mirrors the pipeline's four processing stages plus
evaluation tooling:

  geometry    camera model, SE(3) algebra, projection
  frontend    keypoints, descriptor matching, edges, L-shape junctions
  epipolar    essential matrix, pose recovery, triangulation
  depth       per-frame dense depth maps (file-backed) with bilinear sampling
  ekf         6-DoF sensor fusion of velocity/attitude streams with VO
  losses      reprojection / cycle-consistency / L-shape residuals
  ba          sliding-window Levenberg-Marquardt bundle adjustment
  evaluation  trajectory association, APE / ATE metrics, TUM trajectory I/O
  dataset     TUM-layout dataset ingestion and measurement replay
  pipeline    end-to-end orchestration and artifact export
  cli         `edgeslam run|eval|info`
"""

__version__ = "0.1.0"
