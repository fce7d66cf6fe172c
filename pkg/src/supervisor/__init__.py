from src.supervisor.backend import BackendFactory, EnforcementBackend, NativeBackend, SimulatedBackend
from src.supervisor.channel import decode_frame, encode_frame, split_frames, write_frame
from src.supervisor.sandbox_spec import CommandJob, EvalResult, EvalStatus, ResourceUsage, SandboxSpec
from src.supervisor.secure_eval import LIMIT_SIGNALS, Supervisor, reap, secure_eval

__all__ = [
    'BackendFactory', 'EnforcementBackend', 'NativeBackend', 'SimulatedBackend',
    'decode_frame', 'encode_frame', 'split_frames', 'write_frame',
    'CommandJob', 'EvalResult', 'EvalStatus', 'ResourceUsage', 'SandboxSpec',
    'LIMIT_SIGNALS', 'Supervisor', 'reap', 'secure_eval',
]
