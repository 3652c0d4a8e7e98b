"""roomscout: open-vocabulary room recognition with conformal selection.

Library layers, bottom to top: grid construction from point clouds
(roomscout.grids), room segmentation and metrics (roomscout.segmentation),
camera view planning (roomscout.viewplan), embedding-based room scoring
(roomscout.scoring), conformal room selection (roomscout.conformal), and
the end-to-end pipeline plus CLI (roomscout.pipeline, roomscout.cli).
"""

__version__ = "0.1.0"
