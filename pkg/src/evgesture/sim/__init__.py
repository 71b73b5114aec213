from .esim import EventRate, FrameSequence, SimConfig, compute_event_rate, generate_events, inject_noise
from .frames_io import read_frames, write_frames
