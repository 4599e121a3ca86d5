import numpy as np
import pytest

from ssdl import Detection, DetectionStore


def make_store(frames, scores=None):
    """Build a store from nested [[vec, ...], ...] frame lists; ids count up frame-major."""
    detections = []
    det_id = 0
    for frame_idx, frame in enumerate(frames):
        for vec in frame:
            score = 1.0 if scores is None else scores[det_id]
            detections.append(Detection(det_id, frame_idx, score, np.atleast_1d(np.asarray(vec, float))))
            det_id += 1
    return DetectionStore(detections)


def random_frames(rng, max_detections=50, max_dim=8, max_frames=8):
    """Random frame structure as plain lists for oracle use: [[(id, [floats])...]...]."""
    n = int(rng.integers(1, max_detections + 1))
    dim = int(rng.integers(1, max_dim + 1))
    n_frames = int(rng.integers(1, max_frames + 1))
    frames = [[] for _ in range(n_frames)]
    for det_id in range(n):
        frame = int(rng.integers(0, n_frames))
        vec = [float(x) for x in rng.normal(0.0, 1.0, size=dim)]
        frames[frame].append((det_id, vec))
    return frames


def frames_to_store(frames):
    detections = []
    for frame_idx, frame in enumerate(frames):
        for det_id, vec in frame:
            detections.append(Detection(det_id, frame_idx, 1.0, np.asarray(vec, float)))
    return DetectionStore(detections)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
