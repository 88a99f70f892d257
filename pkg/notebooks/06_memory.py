"""Parameter memory of SDC versus full 2-D kernels at common resolutions."""
from sdcwarp.pipeline import format_memory_report, memory_report

print(format_memory_report(1920, 1080))
for w, h in ((640, 360), (1280, 720), (3840, 2160)):
    rep = memory_report(w, h)
    print(f"{w}x{h}: sdc {rep['sdc_bytes'] / 2**20:.1f} MiB, 2-D kernel {rep['kernel_bytes'] / 2**30:.2f} GiB")
