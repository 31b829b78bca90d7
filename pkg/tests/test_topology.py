import math
import os
import sys
import unittest
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).parent.parent / 'src'))

from errors import CoverageError, EmptyMaskError, InvalidParameterError
from field_synthesis import GridSpec, OpticsParams, build_beam, default_grid
from polarimetry import PoincareField, poincare_from_beam, project_intensities, reconstruct
from topology import (AnalysisResult, auto_radius, boundary_number, density_uncertainty, integral_uncertainty,
                      radius_sweep, skyrmion_density, skyrmion_number, sweep_table)

SLOW = os.environ.get("SKYRM_SLOW")


def hedgehog(m, grid):
    """Texture with Phi = m phi, Theta(0) = 0 and a polar angle reaching pi within a few units.

    tan(Theta / 2)^2 = r^(2m) exp(r^2), so M_x + i M_y = 2 (x + i y)^m exp(r^2 / 2) / (1 + rho) stays smooth.
    """
    x, y = grid.mesh()
    r2 = x ** 2 + y ** 2
    s = (x + 1j * y) ** m * np.exp(r2 / 2.0)
    rho = np.abs(s) ** 2
    mz = (1.0 - rho) / (1.0 + rho)
    inplane = 2.0 * s / (1.0 + rho)
    return PoincareField(grid=grid, mx=inplane.real, my=inplane.imag, mz=mz, mask=np.ones(grid.shape, dtype=bool))


def beam_number(l1, l2, n=256, eta=1e-5, **kwargs):
    beam = build_beam(l1, l2, grid=kwargs.pop("grid", None) or default_grid(l1, l2, OpticsParams(), n), **kwargs)
    pf = poincare_from_beam(beam)
    radius = auto_radius(beam.total_intensity(), beam.grid, eta=eta)
    return skyrmion_number(skyrmion_density(pf), (0.0, 0.0), radius)


class TestClosedFormTextures(unittest.TestCase):

    def test_hedgehog_numbers(self):
        grid = GridSpec.square(401, 3.2)
        for m in (1, 2, 3):
            result = skyrmion_number(skyrmion_density(hedgehog(m, grid)), (0.0, 0.0), 3.0)
            self.assertAlmostEqual(result.n_skyrmion, m, delta=0.01 * m, msg=f"m={m}")

    def test_antivortex_is_negative(self):
        grid = GridSpec.square(401, 3.2)
        pf = hedgehog(1, grid)
        flipped = PoincareField(grid=grid, mx=pf.mx, my=-pf.my, mz=pf.mz, mask=pf.mask)
        result = skyrmion_number(skyrmion_density(flipped), (0.0, 0.0), 3.0)
        self.assertAlmostEqual(result.n_skyrmion, -1.0, delta=0.01)

    @unittest.skipUnless(SLOW, "set SKYRM_SLOW=1 for dense-grid checks")
    def test_hedgehog_numbers_dense(self):
        for m, n in ((1, 1201), (2, 1201), (3, 1601), (5, 2001)):
            grid = GridSpec.square(n, 3.2)
            result = skyrmion_number(skyrmion_density(hedgehog(m, grid)), (0.0, 0.0), 3.0)
            self.assertAlmostEqual(result.n_skyrmion, m, delta=1e-3, msg=f"m={m}")


class TestDensity(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.grid = GridSpec.square(257, 4.0)
        cls.pf = poincare_from_beam(build_beam(0, 2, grid=cls.grid))
        cls.sd = skyrmion_density(cls.pf)

    def test_quiet_core_and_bright_ring(self):
        """Theta rises monotonically from 0 to pi while Phi = delta_l phi, so Sigma_z >= 0 even at the axis."""
        peak = float(self.sd.sigma_z.max())
        core = float(self.sd.sigma_z[128, 128])
        self.assertGreater(peak, 0.0)
        self.assertLess(abs(core), 1e-2 * peak)
        self.assertGreaterEqual(core, -1e-9 * peak)

    def test_border_pixels_are_excluded(self):
        self.assertFalse(self.sd.mask[0].any())
        self.assertFalse(self.sd.mask[:, -1].any())
        self.assertTrue(np.all(self.sd.sigma_z[~self.sd.mask] == 0.0))

    def test_empty_mask(self):
        pf = PoincareField(grid=self.grid, mx=self.pf.mx, my=self.pf.my, mz=self.pf.mz,
                           mask=np.zeros(self.grid.shape, dtype=bool))
        with self.assertRaises(EmptyMaskError):
            skyrmion_density(pf)

    def test_uncertainty_propagation(self):
        zero = density_uncertainty(self.pf, np.zeros((3,) + self.grid.shape))
        self.assertTrue(np.all(zero == 0.0))
        sigma = density_uncertainty(self.pf, np.full((3,) + self.grid.shape, 1e-3))
        self.assertTrue(np.all(sigma >= 0.0))
        self.assertGreater(integral_uncertainty(self.sd, sigma, (0.0, 0.0), 2.0), 0.0)

    def test_boundary_formula(self):
        self.assertAlmostEqual(boundary_number(self.pf, (0.0, 0.0), 3.5), 2.0, delta=0.05)


class TestSkyrmionNumber(unittest.TestCase):

    def test_equals_delta_l(self):
        for l1, l2 in ((0, 2), (1, 3), (0, 4)):
            result = beam_number(l1, l2)
            self.assertAlmostEqual(result.n_skyrmion, l2 - l1, delta=0.05 * (l2 - l1), msg=f"{l1}->{l2}")
            self.assertGreaterEqual(result.coverage, 0.9)

    def test_basis_swap_keeps_the_sign(self):
        h = beam_number(0, 2, n=192).n_skyrmion
        v = beam_number(0, 2, n=192, basis="V").n_skyrmion
        self.assertAlmostEqual(h, v, delta=1e-9)

    def test_equal_modes_carry_no_charge(self):
        self.assertAlmostEqual(beam_number(1, 1, n=128).n_skyrmion, 0.0, delta=1e-9)

    def test_theta0_invariance(self):
        base = beam_number(0, 2, n=192).n_skyrmion
        for theta0 in (math.pi / 4, math.pi / 2):
            self.assertAlmostEqual(beam_number(0, 2, n=192, theta0=theta0).n_skyrmion, base, delta=1e-3)

    def test_propagation_invariance(self):
        optics = OpticsParams()
        zr = optics.mode(0).rayleigh_range
        far = OpticsParams(z=zr)
        near = beam_number(0, 2, n=256).n_skyrmion
        result = beam_number(0, 2, optics=far, grid=default_grid(0, 2, far, 256))
        self.assertAlmostEqual(result.n_skyrmion, near, delta=5e-3)

    def test_intensity_scale_invariance(self):
        beam = build_beam(0, 2, grid=GridSpec.square(128, 4.0))
        ms = project_intensities(beam)
        a = reconstruct(ms, 1e-6)
        for key in ms.images:
            ms.images[key] = ms.images[key] * 1e3
        b = reconstruct(ms, 1e-6)
        na = skyrmion_number(skyrmion_density(a), (0.0, 0.0), 3.0).n_skyrmion
        nb = skyrmion_number(skyrmion_density(b), (0.0, 0.0), 3.0).n_skyrmion
        self.assertAlmostEqual(na, nb, delta=1e-9)

    def test_truncated_disk_undercounts(self):
        full = beam_number(0, 2, n=192)
        core = skyrmion_number(skyrmion_density(poincare_from_beam(build_beam(0, 2, grid=default_grid(
            0, 2, OpticsParams(), 192)))), (0.0, 0.0), 0.5)
        self.assertLess(core.n_skyrmion, 0.5 * full.n_skyrmion)

    def test_small_radius_and_coverage_errors(self):
        grid = GridSpec.square(64, 3.0)
        sd = skyrmion_density(poincare_from_beam(build_beam(0, 2, grid=grid)))
        with self.assertRaises(InvalidParameterError):
            skyrmion_number(sd, (0.0, 0.0), 1.5 * grid.dx)

        half = sd.mask.copy()
        half[:, :32] = False
        sd.mask = half
        with self.assertRaises(CoverageError) as ctx:
            skyrmion_number(sd, (0.0, 0.0), 1.0)
        self.assertLess(ctx.exception.coverage, 0.9)

    def test_small_fully_valid_disk_is_covered(self):
        grid = GridSpec.square(257, 4.0)
        sd = skyrmion_density(poincare_from_beam(build_beam(0, 2, grid=grid)))
        for center in ((0.0, 0.0), (0.37 * grid.dx, -0.21 * grid.dy)):
            for pitches in (3.0, 3.5, 4.0):
                result = skyrmion_number(sd, center, pitches * grid.dx)
                self.assertEqual(result.coverage, 1.0, msg=f"{center}, {pitches} px")
                self.assertGreaterEqual(result.n_skyrmion, -1e-12)

    def test_disk_hanging_off_the_grid(self):
        grid = GridSpec.square(129, 3.0)
        pf = hedgehog(1, grid)
        sd = skyrmion_density(pf)
        with self.assertRaises(CoverageError) as ctx:
            skyrmion_number(sd, (grid.half_extent(), 0.0), 1.0)
        self.assertAlmostEqual(ctx.exception.coverage, 0.5, delta=0.05)

    @unittest.skipUnless(SLOW, "set SKYRM_SLOW=1 for the pitch-halving convergence check")
    def test_second_order_convergence(self):
        coarse = beam_number(0, 4, n=256)
        fine = beam_number(0, 4, n=512)
        self.assertGreaterEqual(abs(coarse.n_skyrmion - 4) / abs(fine.n_skyrmion - 4), 3.5)

    @unittest.skipUnless(SLOW, "set SKYRM_SLOW=1 for the full delta-l series")
    def test_delta_l_series_on_512_grid(self):
        for delta in (2, 4, 6, 8, 10, 12):
            result = beam_number(0, delta, n=512)
            self.assertAlmostEqual(result.n_skyrmion, delta, delta=0.01 * delta, msg=f"delta_l={delta}")


class TestRadius(unittest.TestCase):

    def test_gaussian_auto_radius(self):
        grid = GridSpec.square(257, 4.0)
        x, y = grid.mesh()
        intensity = np.exp(-2.0 * (x ** 2 + y ** 2))
        radius = auto_radius(intensity, grid, eta=1e-3)
        self.assertAlmostEqual(radius, math.sqrt(math.log(1e3) / 2.0), delta=0.03)

    def test_auto_radius_errors(self):
        grid = GridSpec.square(65, 2.0)
        x, y = grid.mesh()
        with self.assertRaises(InvalidParameterError):
            auto_radius(np.exp(-(x ** 2 + y ** 2)), grid, eta=1.5)
        with self.assertRaises(InvalidParameterError):
            auto_radius(np.zeros(grid.shape), grid)
        with self.assertRaises(InvalidParameterError):
            # still 2% of the peak at the grid edge
            auto_radius(np.exp(-(x ** 2 + y ** 2)), grid, eta=1e-6)

    def test_auto_radius_grows_with_delta_l(self):
        radii = {}
        for delta in (2, 12):
            beam = build_beam(0, delta, grid=default_grid(0, delta, OpticsParams(), 128))
            radii[delta] = auto_radius(beam.total_intensity(), beam.grid, eta=1e-5)
        self.assertGreater(radii[12], radii[2])

    def test_sweep(self):
        grid = default_grid(0, 2, OpticsParams(), 128)
        sd = skyrmion_density(poincare_from_beam(build_beam(0, 2, grid=grid)))
        results = radius_sweep(sd, (0.0, 0.0), [0.5, 1.0, 2.0, 3.0])
        numbers = [r.n_skyrmion for r in results]
        self.assertTrue(all(b > a for a, b in zip(numbers, numbers[1:])))
        table = sweep_table(results)
        self.assertEqual(list(table.columns), ["radius", "N", "uncertainty", "pixel_count"])
        self.assertEqual(len(table), 4)
        with self.assertRaises(InvalidParameterError):
            radius_sweep(sd, (0.0, 0.0), [1.0, 1.0])

    def test_result_validation(self):
        with self.assertRaises(InvalidParameterError):
            AnalysisResult(n_skyrmion=2.0, uncertainty=-1.0, integration_radius=1.0, center=(0, 0), pixel_count=10)
        result = AnalysisResult(n_skyrmion=2.0, uncertainty=0.1, integration_radius=1.0, center=(0, 0),
                                pixel_count=10)
        self.assertEqual(result.to_dict()["center"], [0.0, 0.0])


if __name__ == '__main__':
    unittest.main()
