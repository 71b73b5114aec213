from .bbox import BBox, bbox_from_joints
from .hand import HandPose, blend_poses, forward_kinematics, sigmoid_profile
from .markov import (
    ALLOWED_SUCCESSORS,
    DEFAULT_WEIGHTS,
    ChainError,
    GestureScript,
    MarkovChain,
    ScriptConfig,
    ScriptEntry,
    sample_script,
)
from .rotate import draw_rotation, rotate_image, rotate_points, rotate_sequence
from .scene import CameraPath, SceneConfig
from .sequence import SynthConfig, SynthSequence, synthesize_sequence
