"""How often a tag is read, by printed size and blur strength."""
from qrsl.framelab.recall import DEFAULT_BLUR_GRID, recall_study
from qrsl.framelab.scene import DEFAULT_PX_PER_CM

print(f"camera: {DEFAULT_PX_PER_CM} px per cm, blur sigmas",
      [g.gaussian_sigma for g in DEFAULT_BLUR_GRID])
table = recall_study(sizes=(1, 2, 3), trials=50, seed=0)
print(table.format())
# at this resolution a 1cm tag spans about one pixel per module, too few to sample
