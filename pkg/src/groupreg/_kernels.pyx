# Hot inner loops: direct 2D convolution and bilinear warping.
# Inputs arrive pre-padded and outputs pre-allocated by groupreg.backend,
# so the loops below run branch-free over valid indices.

from libc.math cimport floor

ctypedef fused real:
    float
    double


def conv2d_fwd(real[:, :, :, ::1] xp, real[:, :, :, ::1] k,
               real[:, :, :, ::1] y, Py_ssize_t stride):
    cdef Py_ssize_t N = xp.shape[0], C = xp.shape[1]
    cdef Py_ssize_t F = k.shape[0], kh = k.shape[2], kw = k.shape[3]
    cdef Py_ssize_t oh = y.shape[2], ow = y.shape[3]
    cdef Py_ssize_t n, f, c, ky, kx, oy, ox, row
    cdef real w
    for n in range(N):
        for f in range(F):
            for c in range(C):
                for ky in range(kh):
                    for kx in range(kw):
                        w = k[f, c, ky, kx]
                        if stride == 1:
                            for oy in range(oh):
                                row = oy + ky
                                for ox in range(ow):
                                    y[n, f, oy, ox] += xp[n, c, row, ox + kx] * w
                        else:
                            for oy in range(oh):
                                row = oy * stride + ky
                                for ox in range(ow):
                                    y[n, f, oy, ox] += xp[n, c, row, ox * stride + kx] * w


def conv2d_bwd_input(real[:, :, :, ::1] gy, real[:, :, :, ::1] k,
                     real[:, :, :, ::1] gxp, Py_ssize_t stride):
    cdef Py_ssize_t N = gy.shape[0], F = gy.shape[1]
    cdef Py_ssize_t C = k.shape[1], kh = k.shape[2], kw = k.shape[3]
    cdef Py_ssize_t oh = gy.shape[2], ow = gy.shape[3]
    cdef Py_ssize_t n, f, c, ky, kx, oy, ox, row
    cdef real w
    for n in range(N):
        for f in range(F):
            for c in range(C):
                for ky in range(kh):
                    for kx in range(kw):
                        w = k[f, c, ky, kx]
                        if stride == 1:
                            for oy in range(oh):
                                row = oy + ky
                                for ox in range(ow):
                                    gxp[n, c, row, ox + kx] += gy[n, f, oy, ox] * w
                        else:
                            for oy in range(oh):
                                row = oy * stride + ky
                                for ox in range(ow):
                                    gxp[n, c, row, ox * stride + kx] += gy[n, f, oy, ox] * w


def conv2d_bwd_kernel(real[:, :, :, ::1] gy, real[:, :, :, ::1] xp,
                      real[:, :, :, ::1] gk, Py_ssize_t stride):
    cdef Py_ssize_t N = gy.shape[0], F = gy.shape[1]
    cdef Py_ssize_t C = xp.shape[1], kh = gk.shape[2], kw = gk.shape[3]
    cdef Py_ssize_t oh = gy.shape[2], ow = gy.shape[3]
    cdef Py_ssize_t n, f, c, ky, kx, oy, ox, row
    cdef real acc
    for f in range(F):
        for c in range(C):
            for ky in range(kh):
                for kx in range(kw):
                    acc = 0
                    for n in range(N):
                        if stride == 1:
                            for oy in range(oh):
                                row = oy + ky
                                for ox in range(ow):
                                    acc += gy[n, f, oy, ox] * xp[n, c, row, ox + kx]
                        else:
                            for oy in range(oh):
                                row = oy * stride + ky
                                for ox in range(ow):
                                    acc += gy[n, f, oy, ox] * xp[n, c, row, ox * stride + kx]
                    gk[f, c, ky, kx] += acc


def warp_fwd(real[:, ::1] src, real[:, :, ::1] u, real[:, ::1] out):
    cdef Py_ssize_t H = src.shape[0], W = src.shape[1]
    cdef Py_ssize_t i, j, y0, x0, y1, x1
    cdef real y, x, wy, wx, v00, v01, v10, v11
    for i in range(H):
        for j in range(W):
            y = i + u[0, i, j]
            x = j + u[1, i, j]
            y0 = <Py_ssize_t>floor(y)
            x0 = <Py_ssize_t>floor(x)
            y1 = y0 + 1
            x1 = x0 + 1
            wy = y - y0
            wx = x - x0
            v00 = src[y0, x0] if (0 <= y0 < H and 0 <= x0 < W) else 0
            v01 = src[y0, x1] if (0 <= y0 < H and 0 <= x1 < W) else 0
            v10 = src[y1, x0] if (0 <= y1 < H and 0 <= x0 < W) else 0
            v11 = src[y1, x1] if (0 <= y1 < H and 0 <= x1 < W) else 0
            out[i, j] = ((1 - wy) * ((1 - wx) * v00 + wx * v01)
                         + wy * ((1 - wx) * v10 + wx * v11))


def warp_bwd(real[:, ::1] gy_out, real[:, ::1] src, real[:, :, ::1] u,
             real[:, ::1] gsrc, real[:, :, ::1] gu):
    cdef Py_ssize_t H = src.shape[0], W = src.shape[1]
    cdef Py_ssize_t i, j, y0, x0, y1, x1
    cdef real y, x, wy, wx, v00, v01, v10, v11, g
    cdef bint b00, b01, b10, b11
    for i in range(H):
        for j in range(W):
            y = i + u[0, i, j]
            x = j + u[1, i, j]
            y0 = <Py_ssize_t>floor(y)
            x0 = <Py_ssize_t>floor(x)
            y1 = y0 + 1
            x1 = x0 + 1
            wy = y - y0
            wx = x - x0
            b00 = 0 <= y0 < H and 0 <= x0 < W
            b01 = 0 <= y0 < H and 0 <= x1 < W
            b10 = 0 <= y1 < H and 0 <= x0 < W
            b11 = 0 <= y1 < H and 0 <= x1 < W
            v00 = src[y0, x0] if b00 else 0
            v01 = src[y0, x1] if b01 else 0
            v10 = src[y1, x0] if b10 else 0
            v11 = src[y1, x1] if b11 else 0
            g = gy_out[i, j]
            gu[0, i, j] += g * ((1 - wx) * (v10 - v00) + wx * (v11 - v01))
            gu[1, i, j] += g * ((1 - wy) * (v01 - v00) + wy * (v11 - v10))
            if b00:
                gsrc[y0, x0] += g * (1 - wy) * (1 - wx)
            if b01:
                gsrc[y0, x1] += g * (1 - wy) * wx
            if b10:
                gsrc[y1, x0] += g * wy * (1 - wx)
            if b11:
                gsrc[y1, x1] += g * wy * wx
