"""Generation-then-evaluation driving planner at desk scale.

Pipeline stages: synthetic scene logging, joint action-diffusion policy
training, preference data collection with pluggable judges, scene-evaluator
(reward) training, clipped-ratio RL fine-tuning of the denoiser, and a
closed-loop replanning benchmark.
"""

__version__ = "0.1.0"
