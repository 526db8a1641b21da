"""Render a short scene, read tags, and fill in blurred frames from the dictionary."""
import numpy as np

from qrsl.framelab.degrade import DegradationSpec
from qrsl.framelab.scene import Camera, SceneObject, SceneSpec, synth_scene
from qrsl.labeling import build_dictionary, extract_feature, label_video, read_tags

objs = [SceneObject("pipette", 3, 11, payload="3"),
        SceneObject("tube", 3, 23, payload="5"),
        SceneObject("rack", 3, 41, payload="9")]
script = ["pipette"] * 8 + ["tube"] * 8 + ["rack"] * 8
blur = DegradationSpec(gaussian_sigma=2.5)
spec = SceneSpec(objs, len(script), 10.0, Camera((240, 180)), script,
                 frame_degradations={i: blur for i in range(0, 24, 3)})
scene = synth_scene(spec, seed=1)

dets, feats = [], []
for box in scene.object_boxes:
    img = scene.frames[box.frame_idx]
    dets += read_tags(img, [box.bbox], box.frame_idx, name_map=scene.payloads)
    feats.append(extract_feature(img, box.bbox))

print("decoded:", sum(d.name is not None for d in dets), "of", len(dets))
d = build_dictionary(zip(dets, feats))
print("dictionary:", {n: d[n].count for n in d.names})

out = label_video(dets, feats, d, len(script))
for lab in out.labeled:
    if lab.source.value == "DictionaryLinked":
        i = lab.detection.frame_idx
        print(f"frame {i:2d}: linked to {lab.assigned_name!r} (sim {lab.similarity:.3f}), truth {script[i]!r}")
print("all frames right:", [n[0] for n in out.names] == script)
