"""Layered OCT-like image synthesis at desk scale.

Subpackages and modules:
  tensorcore    -- dense-array engine: autograd ops, Adam, checkpoints, U-Net
  data          -- PGM I/O, ROI crop, box downsample, phantom dataset generator
  sketchgen     -- boundary statistics, spline boundary sampling, sketch rendering
  diffusion     -- cosine schedule, forward/reverse process, training, sampling
  segmentation  -- layer segmenter training and Dice evaluation
  distill       -- teacher-student pseudo labels and experiment runners
  cli           -- command-line entry points
"""

__version__ = "0.1.0"
