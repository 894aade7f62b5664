import os
import subprocess
import sys

from nsasym import kernels


def test_active_backend_is_listed():
    assert kernels.BACKEND in kernels.available_backends()
    assert kernels.get() is kernels.get(kernels.BACKEND)


def test_pure_python_fallback_selected_by_environment():
    env = dict(os.environ, NSASYM_PURE_PYTHON="1")
    code = ("from nsasym import kernels, bilinear, modes, field\n"
            "import numpy as np\n"
            "ms = modes.enumerate_modes(3, 4)\n"
            "u = field.SpectralField.random(ms, np.random.default_rng(0))\n"
            "bilinear.bilinear_B(u, u)\n"
            "print(kernels.BACKEND, kernels.available_backends())\n")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python ['python']"
