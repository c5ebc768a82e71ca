"""Depth of one object from another through the shared ground plane.

Two cars stand on the same flat road. Knowing the first car's depth and
where both centers sit relative to the horizon is enough to recover the
second car's depth exactly. Lifting the second car's bottom by a few
centimeters shows how quickly that breaks down near the horizon.
"""
from pgdepth import CameraModel, pairwise_depth_approx, project_point, propagation_error_bound

cam = CameraModel(f=721.5377, c_u=609.5593, c_v=172.854)
ground = 1.65

near = (-2.0, ground - 1.5 / 2, 12.0)
pc1, d1 = project_point(cam, near)
print(f"reference car: depth {d1:.2f} m, {pc1.v:.1f} px below the horizon")

for z in (15.0, 30.0, 60.0):
    for lift in (0.0, 0.1):
        far = (3.0, ground - lift - 1.6 / 2, z)
        pc2, d2 = project_point(cam, far)
        est = pairwise_depth_approx(cam, pc1.v, d1, 1.5, pc2.v, 1.6)
        bound = propagation_error_bound(cam.f, pc2.v, lift)
        print(f"  target at {d2:5.1f} m, bottom lifted {lift:.1f} m: "
              f"estimate {est:6.2f} m, error {abs(est - d2):5.2f} m (predicted {bound:5.2f} m)")
