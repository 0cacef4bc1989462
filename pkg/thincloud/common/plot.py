'''Plot.'''

from typing import (List, Sequence)
import networkx as nx
import matplotlib.pyplot as plt


def plot_bench_scaling(records:Sequence, path:str=None):
    '''Log-log wall time and peak buffer size against sequence length, one line per kernel.

    Args:
        records (Sequence[BenchRecord]): Benchmark records.
        path (str, optional): Save figure to this file, otherwise show it.

    Returns:
        Figure with 1x2 subplots.
    '''
    fig, (ax_time, ax_mem) = plt.subplots(1, 2, figsize=(10, 4))
    fig.suptitle('Attention scaling', fontweight='bold')
    for kernel in sorted({r.kernel for r in records}):
        recs = sorted((r for r in records if r.kernel==kernel), key=lambda r: r.N)
        n = [r.N for r in recs]
        ax_time.loglog(n, [r.wall_time_ns/1e6 for r in recs], marker='o', label=kernel)
        ax_mem.loglog(n, [r.peak_transient_elements for r in recs], marker='o', label=kernel)

    ax_time.set(xlabel='N', ylabel='Median time (ms)')
    ax_mem.set(xlabel='N', ylabel='Peak transient elements')
    for ax in (ax_time, ax_mem):
        ax.grid(which='major', linestyle='--')
        ax.legend()
    _finish(fig, path)
    return fig


def plot_training_curves(history:List[dict], path:str=None):
    '''Losses per logged step, and held-out PSNR where evaluated.'''
    fig, (ax_loss, ax_eval) = plt.subplots(2, 1, sharex=True, figsize=(8, 6))
    fig.suptitle('Training', fontweight='bold')
    steps = [row['step'] for row in history]
    for key in ('d_loss', 'g_adv', 'l1'):
        ax_loss.plot(steps, [row[key] for row in history], label=key)
    ax_loss.set(ylabel='Loss')
    ax_loss.legend()
    ax_loss.grid(which='major', axis='y', linestyle='--')

    evaluated = [row for row in history if row.get('psnr_eval') is not None]
    ax_eval.plot([row['step'] for row in evaluated], [row['psnr_eval'] for row in evaluated],
                 marker='o', color='tab:green')
    ax_eval.set(xlabel='Step', ylabel='Held-out PSNR (dB)')
    ax_eval.grid(which='major', axis='y', linestyle='--')
    _finish(fig, path)
    return fig


def plot_samples(rows:Sequence, path:str=None):
    '''Grid of images, one row per sample, e.g. ``(cloudy, generated, clear)`` per row.

    Args:
        rows (Sequence[Sequence[Tensor]]): ``3 x H x W`` images in [0, 1].
        path (str, optional): Save figure to this file, otherwise show it.
    '''
    rows = list(rows)
    cols = max(len(r) for r in rows)
    fig, axes = plt.subplots(len(rows), cols, figsize=(2*cols, 2*len(rows)), squeeze=False)
    titles = ['cloudy', 'generated', 'clear'] if cols==3 else [''] * cols
    for i, images in enumerate(rows):
        for j in range(cols):
            ax = axes[i][j]
            ax.axis('off')
            if j>=len(images): continue
            ax.imshow(images[j].data.transpose(1, 2, 0).clip(0.0, 1.0))
            if i==0: ax.set_title(titles[j], fontsize='small')
    _finish(fig, path)
    return fig


def plot_tape_graph(tape, path:str=None):
    '''Recorded computation graph: params as squares, ops as circles, in topological layers.'''
    G = tape.to_networkx()
    for layer, nodes in enumerate(nx.topological_generations(G)):
        for node in nodes: G.nodes[node]['layer'] = layer
    pos = nx.multipartite_layout(G, subset_key='layer')

    fig = plt.figure(figsize=(max(6, 0.6*len(G)), 6))
    params = [n for n, d in G.nodes(data=True) if d.get('kind')=='param']
    op_nodes = [n for n in G.nodes if n not in set(params)]
    nx.draw_networkx_nodes(G, pos, nodelist=params, node_shape='s', node_color='white',
                           edgecolors='black')
    nx.draw_networkx_nodes(G, pos, nodelist=op_nodes, node_color='white', edgecolors='tab:blue')
    nx.draw_networkx_edges(G, pos, arrows=True)
    nx.draw_networkx_labels(G, pos, font_size=7)
    plt.axis('off')
    _finish(fig, path)
    return fig


def _finish(fig, path:str=None):
    fig.tight_layout()
    if path:
        fig.savefig(path)
        plt.close(fig)
    else:
        plt.show()
