'''Import common object.'''

# tensors and differentiation
from .autodiff.tensor import (Tensor, Param)
from .autodiff.tape import (Tape, backward)
from .autodiff.monitor import OpMonitor

# attention
from .model.attention import (AttentionConfig, AttentionWeights, softmax_attention,
                              kernel_attention, linear_attention, multi_head_linear_attention,
                              attention_block)

# networks and training
from .model.network import (GeneratorConfig, DiscriminatorConfig, Generator, Discriminator)
from .model.checkpoint import (Checkpoint, save_checkpoint, load_checkpoint)
from .gan.loss import GanLossParams
from .gan.trainer import (TrainConfig, GanTrainer, train_loop)

# data and metrics
from .data.image import ImagePair
from .data.dataset import make_dataset
from .evaluation.metrics import (psnr, ssim)
from .evaluation.report import (MetricReport, evaluate_pairs)

# benchmark
from .bench.benchmark import BenchMark
