"""Procedural MoCap-like clips for the bundled sample corpus.

A small forward-kinematic body drives the 15 keypoints through a handful of
periodic actions. The clips stand in for real MoCap archives, which are not
shipped; anything in the skeleton-sequence format can replace them.
"""

from __future__ import annotations

import numpy as np

from .skeleton import NUM_JOINTS

FPS = 30.0

# segment lengths (m) for a unit-scale body
BODY = dict(pelvis_height=0.95, spine=0.50, head_fwd=0.08, head_up=0.11,
            hip_width=0.09, hip_drop=0.06, thigh=0.42, shin=0.41,
            shoulder_width=0.17, shoulder_drop=0.03, upper_arm=0.28, forearm=0.25)


def _rx(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[1, 0, 0], [0, c, -s], [0, s, c]])


def _ry(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]])


def _rz(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])


DOWN = np.array([0.0, 0.0, -1.0])


def forward_kinematics(p, scale=1.0):
    """Joint positions for one set of angles ``p`` (dict of radians / meters).

    Body frame: x forward, y left, z up. Positive flexion swings a limb
    forward; positive abduction swings it away from the body.
    """
    b = {k: v * scale for k, v in BODY.items()}
    g = lambda k: float(p.get(k, 0.0))
    root = np.array([g("root_x"), g("root_y"), b["pelvis_height"] + g("root_z")])
    yaw = _rz(g("yaw"))
    trunk = yaw @ _ry(g("lean")) @ _rx(g("roll"))
    J = np.zeros((NUM_JOINTS, 3))
    J[2] = root
    neck = root + trunk @ np.array([0.0, 0.0, b["spine"]])
    J[0] = neck
    J[1] = neck + trunk @ np.array([b["head_fwd"], 0.0, b["head_up"]])
    for side, (sh, el, wr, hp, kn, an) in ((1, (3, 4, 5, 6, 7, 8)), (-1, (9, 10, 11, 12, 13, 14))):
        tag = "l" if side > 0 else "r"
        s = neck + trunk @ np.array([0.0, side * b["shoulder_width"], -b["shoulder_drop"]])
        abd = _rx(-side * g(f"{tag}_sh_abd"))
        upper = trunk @ abd @ _ry(-g(f"{tag}_sh_flex")) @ DOWN
        fore = trunk @ abd @ _ry(-(g(f"{tag}_sh_flex") + g(f"{tag}_elbow"))) @ DOWN
        J[sh] = s
        J[el] = s + b["upper_arm"] * upper
        J[wr] = J[el] + b["forearm"] * fore
        h = root + yaw @ np.array([0.0, side * b["hip_width"], -b["hip_drop"]])
        habd = _rx(-side * g(f"{tag}_hip_abd"))
        thigh = yaw @ habd @ _ry(-g(f"{tag}_hip_flex")) @ DOWN
        shin = yaw @ habd @ _ry(-(g(f"{tag}_hip_flex") - g(f"{tag}_knee"))) @ DOWN
        J[hp] = h
        J[kn] = h + b["thigh"] * thigh
        J[an] = J[kn] + b["shin"] * shin
    return J


def _walk(t, a, speed=1.0):
    w = 2 * np.pi * 1.0 * speed
    s = np.sin(w * t)
    return dict(l_hip_flex=0.45 * a * s, r_hip_flex=-0.45 * a * s,
                l_knee=0.5 * a * max(0.0, -s) + 0.05, r_knee=0.5 * a * max(0.0, s) + 0.05,
                l_sh_flex=-0.4 * a * s, r_sh_flex=0.4 * a * s,
                l_elbow=0.3, r_elbow=0.3, l_sh_abd=0.1, r_sh_abd=0.1,
                root_x=0.6 * speed * t, lean=0.05 * speed)


ACTIONS = {
    "walk": lambda t, a: _walk(t, a),
    "run": lambda t, a: {**_walk(t, 1.3 * a, speed=1.6), "l_elbow": 1.4, "r_elbow": 1.4, "lean": 0.2},
    "wave": lambda t, a: dict(r_sh_abd=2.3, r_elbow=0.4 + 0.5 * a * np.sin(2 * np.pi * 1.5 * t),
                              l_sh_abd=0.1, l_elbow=0.1),
    "squat": lambda t, a: (lambda d: dict(root_z=-0.35 * a * d, l_hip_flex=1.3 * a * d, r_hip_flex=1.3 * a * d,
                                          l_knee=2.0 * a * d, r_knee=2.0 * a * d, lean=0.5 * a * d,
                                          l_sh_flex=1.2 * d, r_sh_flex=1.2 * d))(0.5 - 0.5 * np.cos(2 * np.pi * 0.5 * t)),
    "jump": lambda t, a: (lambda d: dict(root_z=0.25 * a * max(0.0, np.sin(2 * np.pi * 0.8 * t)),
                                         l_knee=0.8 * d, r_knee=0.8 * d, l_hip_flex=0.4 * d, r_hip_flex=0.4 * d,
                                         l_sh_abd=2.5 * (1 - d), r_sh_abd=2.5 * (1 - d)))(max(0.0, -np.sin(2 * np.pi * 0.8 * t))),
    "arm_circles": lambda t, a: dict(l_sh_abd=1.5, r_sh_abd=1.5,
                                     l_sh_flex=0.6 * a * np.sin(2 * np.pi * t), r_sh_flex=0.6 * a * np.sin(2 * np.pi * t + np.pi)),
    "bow": lambda t, a: (lambda d: dict(lean=1.2 * a * d, l_sh_flex=0.8 * d, r_sh_flex=0.8 * d,
                                        l_hip_flex=0.2 * d, r_hip_flex=0.2 * d))(0.5 - 0.5 * np.cos(2 * np.pi * 0.4 * t)),
    "kick": lambda t, a: (lambda d: dict(r_hip_flex=1.4 * a * d, r_knee=1.2 * (1 - d) * d * 4,
                                         l_sh_abd=0.6, r_sh_abd=0.6, lean=-0.15 * d))(max(0.0, np.sin(2 * np.pi * 0.7 * t))),
    "box": lambda t, a: dict(l_sh_flex=1.5 * max(0.0, np.sin(2 * np.pi * 1.2 * t)) * a + 0.3,
                             r_sh_flex=1.5 * max(0.0, -np.sin(2 * np.pi * 1.2 * t)) * a + 0.3,
                             l_elbow=2.0 - 1.8 * max(0.0, np.sin(2 * np.pi * 1.2 * t)),
                             r_elbow=2.0 - 1.8 * max(0.0, -np.sin(2 * np.pi * 1.2 * t)),
                             l_knee=0.3, r_knee=0.3, l_hip_flex=0.15, r_hip_flex=0.15, lean=0.15,
                             yaw=0.2 * np.sin(2 * np.pi * 0.6 * t)),
    "turn": lambda t, a: dict(yaw=2 * np.pi * 0.3 * t, l_sh_abd=0.4 * a, r_sh_abd=0.4 * a,
                              l_hip_flex=0.2 * np.sin(2 * np.pi * t), r_hip_flex=-0.2 * np.sin(2 * np.pi * t)),
    "reach": lambda t, a: (lambda d: dict(l_sh_flex=2.8 * d * a, r_sh_flex=2.8 * d * a, lean=-0.1 * d,
                                          l_elbow=0.2, r_elbow=0.2))(0.5 - 0.5 * np.cos(2 * np.pi * 0.5 * t)),
    "side_step": lambda t, a: dict(root_y=0.4 * np.sin(2 * np.pi * 0.5 * t),
                                   l_hip_abd=0.3 * a * max(0.0, np.sin(2 * np.pi * t)),
                                   r_hip_abd=0.3 * a * max(0.0, -np.sin(2 * np.pi * t)),
                                   l_sh_abd=0.5, r_sh_abd=0.5, roll=0.1 * np.sin(2 * np.pi * 0.5 * t)),
    "hug": lambda t, a: (lambda d: dict(l_sh_flex=1.4 * d, r_sh_flex=1.4 * d, l_sh_abd=0.5 * (1 - d) + 0.2,
                                        r_sh_abd=0.5 * (1 - d) + 0.2, l_elbow=1.3 * d, r_elbow=1.3 * d,
                                        lean=0.1 * d))(0.5 - 0.5 * np.cos(2 * np.pi * 0.4 * t)),
}


def make_clip(action: str, n_frames=120, amplitude=1.0, scale=1.0, fps=FPS, noise=0.0, rng=None):
    """Frames ``(T, 15, 3)`` of one procedural action."""
    rng = np.random.default_rng(rng)
    fn = ACTIONS[action]
    out = np.empty((n_frames, NUM_JOINTS, 3))
    for i in range(n_frames):
        params = fn(i / fps, amplitude)
        if noise:
            params = {k: v + noise * rng.standard_normal() for k, v in params.items()}
        out[i] = forward_kinematics(params, scale)
    return out


def build_corpus(seed=0, n_frames=120):
    """Deterministic list of ``(subject, action, frames)`` covering every action."""
    rng = np.random.default_rng(seed)
    clips = []
    for k, action in enumerate(sorted(ACTIONS)):
        scale = float(rng.uniform(0.9, 1.1))
        amp = float(rng.uniform(0.8, 1.2))
        clips.append((f"s{k % 5:02d}", action, make_clip(action, n_frames, amp, scale, noise=0.03, rng=rng)))
    return clips
