from pinchar.config import DEFAULT_CONFIG


def cfg_with(**edits):
    """Default config text with ``key = value`` lines replaced."""
    lines = []
    for line in DEFAULT_CONFIG.splitlines():
        key = line.split("=")[0].strip()
        if key in edits and "=" in line:
            line = f"{key} = {edits.pop(key)}"
        lines.append(line)
    assert not edits, f"unknown keys {edits}"
    return "\n".join(lines) + "\n"


# A reduced setup that runs the whole CLI pipeline in a few seconds.
SMALL = dict(
    n_elements=32,
    window_s="60e-6",
    grating_depths_m="0.025, 0.030",
    r_v_m="0.014",
    resolution_depth_m="0.030",
)
