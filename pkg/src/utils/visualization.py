import io

import matplotlib.pyplot as plt
import numpy as np


def _save_or_buffer(fig, output_path):
    """保存到文件并返回路径，否则返回内存中的PNG"""
    if output_path:
        fig.savefig(output_path, dpi=150, bbox_inches='tight')
        plt.close(fig)
        return output_path

    buf = io.BytesIO()
    fig.savefig(buf, format='png', dpi=150, bbox_inches='tight')
    plt.close(fig)
    buf.seek(0)
    return buf


def plot_error_profiles(profiles, output_path=None):
    """绘制量化误差随距离变化的曲线

    profiles: {名称: error_vs_distance_profile 返回的DataFrame}
    """
    fig, ax = plt.subplots(figsize=(8, 5))
    for name, profile in profiles.items():
        centers = (profile['bin_lo_m'] + profile['bin_hi_m']) / 2
        ax.plot(centers, profile['mean_error_mm'], marker='o', label=name)

    ax.set_xlabel('distance (m)')
    ax.set_ylabel('mean quantization error (mm)')
    ax.grid(alpha=0.3)
    ax.legend()
    fig.tight_layout()
    return _save_or_buffer(fig, output_path)


def plot_correspondences(corr, output_path=None, marker_size=2):
    """在图像平面上画出匹配点，颜色按超像素区分"""
    fig, ax = plt.subplots(figsize=(10, 10 * corr.image_height / corr.image_width))
    # 没有超像素的点统一用灰色
    labelled = corr.superpixel_id >= 0
    ax.scatter(corr.u[~labelled], corr.v[~labelled], color="0.6", s=marker_size)
    if np.any(labelled):
        ax.scatter(corr.u[labelled], corr.v[labelled], c=corr.superpixel_id[labelled] % 20,
                   s=marker_size, cmap="tab20", vmin=0, vmax=19)

    ax.set_xlim(0, corr.image_width)
    ax.set_ylim(corr.image_height, 0)
    ax.set_aspect('equal')
    ax.set_title(f'{len(corr)} correspondences')
    fig.tight_layout()
    return _save_or_buffer(fig, output_path)
