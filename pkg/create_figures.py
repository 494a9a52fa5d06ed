"""
Render sweep figures from experiment results
Reads estimates.csv (and lengths.csv) from a run directory and writes PNGs
"""
import argparse
import os

import pandas as pd

VARIANT_COLORS = {
    'uncalibrated': '#f56565',
    'calibrated': '#48bb78',
    'calibrated-clifford-rb': '#4299e1',
    'calibrated-dihedral-rb': '#667eea',
}


def _pyplot():
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        raise ValueError("Figures require matplotlib. Install with: pip install matplotlib")
    return plt


def create_sweep_figure(run_dir, output=None):
    """Estimate vs noise parameter, one panel per observable"""
    plt = _pyplot()
    table = pd.read_csv(os.path.join(run_dir, 'estimates.csv'))
    observables = list(dict.fromkeys(table['observable']))
    fig, axes = plt.subplots(1, len(observables), figsize=(6 * len(observables), 4.5), squeeze=False)

    for ax, observable in zip(axes[0], observables):
        rows = table[table['observable'] == observable]
        for variant, group in rows.groupby('variant', sort=False):
            ax.errorbar(group['noise_param'], group['estimate'], yerr=group['sigma'], fmt='o-', capsize=3,
                        color=VARIANT_COLORS.get(variant, '#2d3748'), label=variant)
        target = rows['target'].dropna()
        if not target.empty:
            ax.axhline(target.iloc[0], color='black', linestyle='--', linewidth=1, label='target')
        ax.set_xlabel(f"noise parameter ({rows['noise_kind'].iloc[0]})")
        ax.set_ylabel('estimate')
        ax.set_title(observable, fontweight='bold')
        ax.legend(fontsize=9)

    plt.tight_layout()
    output = output or os.path.join(run_dir, 'sweep.png')
    plt.savefig(output, dpi=200, bbox_inches='tight', facecolor='white')
    plt.close(fig)
    print(f"Sweep figure saved: {output}")
    return output


def create_decay_figure(run_dir, output=None):
    """Per-length signal means with error bars, one curve per noise point"""
    plt = _pyplot()
    table = pd.read_csv(os.path.join(run_dir, 'lengths.csv'))
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for param, group in table.groupby('noise_param'):
        ax.errorbar(group['m'], group['mean'], yerr=group['stderr'], fmt='o-', capsize=3, label=f"{param:g}")
    ax.set_xlabel('sequence length')
    ax.set_ylabel('mean signal')
    ax.set_title(table['protocol'].iloc[0], fontweight='bold')
    ax.legend(title='noise parameter', fontsize=9)

    plt.tight_layout()
    output = output or os.path.join(run_dir, 'decay.png')
    plt.savefig(output, dpi=200, bbox_inches='tight', facecolor='white')
    plt.close(fig)
    print(f"Decay figure saved: {output}")
    return output


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description="Render figures from a run directory")
    parser.add_argument("run_dir")
    args = parser.parse_args()
    if os.path.exists(os.path.join(args.run_dir, 'lengths.csv')):
        create_decay_figure(args.run_dir)
    if os.path.exists(os.path.join(args.run_dir, 'estimates.csv')):
        create_sweep_figure(args.run_dir)
