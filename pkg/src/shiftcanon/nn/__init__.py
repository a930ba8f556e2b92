"""Small numpy network stack with manual backprop, Adam, and the joint training loop."""

from .losses import VARIANTS, loss_classifier, loss_guidance, softmax
from .network import (
    LayerSpec,
    Network,
    adam_step,
    backward,
    blurpool,
    conv,
    dense,
    forward,
    global_avg_pool,
    maxpool,
    relu,
)
from .train import (
    Pipeline,
    TrainConfig,
    TrainResult,
    build_pipeline_nets,
    classifier_specs,
    guidance_angle,
    guidance_features,
    guidance_specs,
    train_classifier,
    train_joint,
)
